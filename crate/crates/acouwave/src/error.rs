//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by solvers, transforms and configuration handling.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid mathematical input: wrong dimension, out-of-range index,
    /// non-positive length, mismatched grids, and similar.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two objects that must live on the same grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A linear solve failed (singular or numerically unusable matrix).
    #[error("linear solve failed at t = {t}: {detail}")]
    LinearSolve { t: f64, detail: String },

    /// An iterative method exhausted its iteration budget.
    #[error("{what} did not converge within {iterations} iterations (last change {last_change:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        last_change: f64,
    },

    /// The outer quasilinear iteration ran out of iterations; the report
    /// carries the full per-iteration history for diagnosis.
    #[error(
        "quasilinear iteration stopped after {} steps without meeting tolerances (last residual {:.3e})",
        report.iterations.len(),
        report.iterations.last().map_or(f64::NAN, |r| r.residual_y)
    )]
    NewtonNonConvergence {
        report: Box<crate::newton_solver::NewtonReport>,
    },

    /// Constant estimation (Rayleigh-quotient maximization) failed to settle.
    #[error("constant estimation failed: {0}")]
    Estimation(String),

    /// Configuration file rejected.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn grid(msg: impl Into<String>) -> Self {
        Error::GridMismatch(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
