use alloc::boxed::Box;
use alloc::string::String;

use thiserror::Error;

use crate::analysis::DipFit;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state is not normalized (norm^2 = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },

    #[error("Gram matrix is not a valid overlap matrix: {0}")]
    InvalidGram(String),

    /// Damped least squares ran out of iterations; carries the last iterate.
    #[error("dip fit did not converge after {iterations} iterations")]
    FitFailure { iterations: usize, last: Box<DipFit> },

    #[error("ill-posed fit: {0}")]
    IllPosed(String),

    #[error("insufficient wing points: found {found}, need at least {needed}")]
    InsufficientWings { found: usize, needed: usize },

    #[error("unstable estimate: standard error {stderr} exceeds {limit}")]
    UnstableEstimate { stderr: f64, limit: f64 },

    #[error("value outside invertibility range: {0}")]
    OutOfRange(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
