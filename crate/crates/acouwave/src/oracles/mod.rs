//! Independent reference computations for validating the main solver:
//! closed-form mode solutions with exactly constructed forcing, a
//! finite-difference initial-boundary-value solver on the same box, and a
//! second-order-in-time scalar reformulation of the system.

pub mod fd;
pub mod kuznetsov;
pub mod manufactured;
