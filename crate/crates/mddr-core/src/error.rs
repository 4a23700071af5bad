//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, MddrError>;

#[derive(Debug, Error)]
pub enum MddrError {
    /// An input failed validation (shapes, ranges, ordering, finiteness).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    /// An iterative computation produced non-finite or unbounded values.
    #[error("numerical failure at {context}: {message}")]
    Numerical { context: String, message: String },

    /// The barycenter solver diverged.
    #[error("barycenter solver diverged at iteration {iteration}")]
    SolverDiverged { iteration: usize },

    /// A chain summary was requested on too short a chain.
    #[error("too few samples: need at least {need}, have {have}")]
    TooFewSamples { need: usize, have: usize },

    /// Serialization or I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed serialized data.
    #[error("parse error: {0}")]
    Parse(String),
}

impl MddrError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        MddrError::InvalidInput(msg.into())
    }

    pub(crate) fn dim(expected: usize, got: usize, context: impl Into<String>) -> Self {
        MddrError::DimensionMismatch {
            expected,
            got,
            context: context.into(),
        }
    }

    pub(crate) fn numerical(context: impl Into<String>, message: impl Into<String>) -> Self {
        MddrError::Numerical {
            context: context.into(),
            message: message.into(),
        }
    }
}
