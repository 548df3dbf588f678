use std::path::PathBuf;

use thiserror::Error;

use crate::solve::PrimalSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("dual variable {value} outside the loss domain [{lo}, {hi}]")]
    DomainViolation { value: f64, lo: f64, hi: f64 },

    #[error("solver did not converge: gradient norm {grad_norm:.3e} after {iterations} iterations", grad_norm = .best.grad_norm, iterations = .best.iterations)]
    NotConverged { best: Box<PrimalSolution> },

    #[error("iteration {iteration} of the iterative recovery failed: {source}")]
    IterationFailed {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("linear system is not positive definite ({context})")]
    LinearSystem { context: &'static str },

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("config error on key `{key}`: {reason}")]
    Config { key: String, reason: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
