//! Error taxonomy shared across the workspace.
//!
//! Structural problems (mismatched grids, wrong buffer lengths) are kept
//! distinct from domain problems (negative times, out-of-range exponents)
//! so callers can tell a programming bug from a bad configuration.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CglError {
    /// Two objects built over different grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model parameter violates a standing assumption of the equations.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The solution norm crossed the blow-up guard; the step index tells
    /// where the trajectory became untrustworthy.
    #[error("blow-up guard tripped at step {step} (t = {time:.6}): |u| = {norm:.3e}")]
    BlowUp { step: u64, time: f64, norm: f64 },
}

pub type Result<T> = std::result::Result<T, CglError>;

impl CglError {
    pub(crate) fn grids(what: &str) -> Self {
        CglError::GridMismatch(format!("{what} requires both operands on the same grid"))
    }
}
