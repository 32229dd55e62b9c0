use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ReicError>;

#[derive(Debug, Error)]
pub enum ReicError {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("no unmasked candidates left to select from")]
    EmptyCandidates,

    #[error("{0}")]
    NotFound(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("non-finite gradient in {0}; aborting update")]
    NonFinite(String),

    #[error("selection trace already replayed; reset it before backpropagating again")]
    DoubleAccumulation,

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ReicError {
    pub(crate) fn shape(context: &'static str, expected: usize, actual: usize) -> Self {
        ReicError::Shape {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        ReicError::Format {
            offset,
            message: message.into(),
        }
    }
}
