//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A cell mapping had a non-invertible Jacobian.
    #[error("degenerate cell: side length {side} is not positive")]
    DegenerateCell { side: f64 },

    /// The direct solver hit an exactly zero pivot.
    #[error("factorization failure at pivot {pivot}")]
    FactorizationFailure { pivot: usize },

    /// Training produced a non-finite loss.
    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    TrainingDiverged { iteration: usize, loss: f64 },

    /// A solver error during a DDM step, annotated with where it happened.
    #[error("ddm step {step}, subdomain {subdomain}: {source}")]
    DdmStep {
        step: usize,
        subdomain: usize,
        #[source]
        source: Box<Error>,
    },

    /// A model or data file did not parse.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Configuration file rejected.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
