//! Error type shared by all modules.

use thiserror::Error;

/// Errors produced by mesh construction, assembly, solvers and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is out of range or inconsistent.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The requested operation needs a differently prepared input
    /// (e.g. a fractional form on a mesh without a horizon layer).
    #[error("configuration error: {0}")]
    Config(String),

    /// An iterative solver did not reach the requested tolerance.
    #[error("solver did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },

    /// A matrix that must be symmetric positive definite is not; this
    /// signals a quadrature or assembly defect, not bad user input.
    #[error("numerical integrity violation: {0}")]
    NumericalIntegrity(String),

    /// The slow reference computation exhausted its budget. This is a
    /// failure of the test infrastructure, not of the product code.
    #[error("oracle failure: {0}")]
    Oracle(String),

    /// Malformed study configuration or data file.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
