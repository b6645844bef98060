//! Spectral Galerkin solver and numerical-analysis laboratory for a damped
//! first-order pressure-velocity system of nonlinear acoustics on
//! rectangular boxes with homogeneous Dirichlet conditions.
//!
//! The building blocks, bottom up:
//!
//! - [`basis`]: the Dirichlet sine eigenbasis, exact mixed-trigonometric
//!   products for the quadratic terms, and a variational estimator for the
//!   embedding and energy constants.
//! - [`fields`], [`forcing`]: pressure-velocity states, trajectories, and
//!   band-limited sources with smooth envelopes.
//! - [`nondim`]: thermoviscous media, dimensionless groups, the coefficient
//!   map onto the first-order system, and entropy recovery.
//! - [`operators`]: the linear generator and the quadratic coupling applied
//!   exactly in coefficient space.
//! - [`linear_solver`], [`newton_solver`]: midpoint time stepping of the
//!   linearized system and the exact-Newton outer iteration with its
//!   convergence certificates.
//! - [`semigroup_lab`]: generator decomposition, dissipativity margins,
//!   resolvent sweeps and propagator decay on the truncated band.
//! - [`oracles`]: independent references — manufactured mode solutions, a
//!   nodal finite-difference companion, and a scalar second-order model for
//!   small-amplitude consistency.
//! - [`config`], [`scenarios`]: TOML run configurations and the studies the
//!   command line exposes.

pub mod basis;
pub mod config;
pub mod error;
pub mod fields;
pub mod forcing;
pub mod linalg;
pub mod linear_solver;
pub mod newton_solver;
pub mod nondim;
pub mod operators;
pub mod oracles;
pub mod scenarios;
pub mod semigroup_lab;

pub use error::{Error, Result};
