//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by corpus, model, training, and analysis operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible matrix or vector shapes; names both sides.
    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: String,
        right: String,
    },

    /// An index, length, or step count fell outside its valid range.
    #[error("out of range: {0}")]
    Range(String),

    /// A semantically invalid argument (not a shape or range issue).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Invalid configuration values.
    #[error("invalid config: {0}")]
    Config(String),

    /// A checkpoint or corpus file failed validation.
    #[error("bad file format: {0}")]
    Format(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: {detail}")]
    Training { step: usize, detail: String },

    /// A statistic is undefined on the given input.
    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::ShapeMismatch {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }
}
