//! Crate-wide error type.

use thiserror::Error;

use crate::qp::QpSolution;

/// Errors produced by kernel evaluation, QP solving, model fitting and
/// model serialization.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    /// The solver exhausted its iteration budget. Carries the best iterate
    /// found so far together with its KKT residual.
    #[error("solver did not converge after {iterations} iterations (kkt residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Box<QpSolution>,
    },

    #[error("model io: {0}")]
    ModelIo(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by malformed caller input rather than by
    /// solver behaviour. Used by the CLI to pick exit codes.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::NonConvergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
