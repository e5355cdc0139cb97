//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes incompatible with the requested operation.
    #[error("shape mismatch in {op}: expected {expected}, got {actual}")]
    Shape {
        op: String,
        expected: String,
        actual: String,
    },

    /// Same as [`Error::Shape`] but tagged with the tape node it occurred at.
    #[error("shape mismatch at tape node {node} ({op}): expected {expected}, got {actual}")]
    TapeShape {
        node: usize,
        op: String,
        expected: String,
        actual: String,
    },

    /// A forward or backward pass produced NaN/Inf.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Invalid configuration (bad hyperparameter, contradictory flags, unknown key).
    #[error("config error: {0}")]
    Config(String),

    /// Transient channel used while its switch is off, or similar ordering bugs.
    #[error("life-cycle violation: {0}")]
    Lifecycle(String),

    /// Malformed scene file, checkpoint, or report.
    #[error("data error: {0}")]
    Data(String),

    /// Checkpoint magic/version mismatch.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(op: &str, expected: String, actual: String) -> Self {
        Error::Shape {
            op: op.to_string(),
            expected,
            actual,
        }
    }
}
