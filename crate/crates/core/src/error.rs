use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input text; `offset` is the byte position of the failure.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Structurally valid input with the wrong shape or contents.
    #[error("format error: {0}")]
    Format(String),

    /// An argument outside its documented domain.
    #[error("parameter error: {0}")]
    Param(String),

    /// Tensor/graph shape mismatch.
    #[error("dimension mismatch: {left} vs {right} in {context}")]
    Dimension {
        context: String,
        left: String,
        right: String,
    },

    /// Frames whose neck coincides with the normalization origin.
    #[error("degenerate frames (neck at origin): {0:?}")]
    DegenerateFrames(Vec<usize>),

    /// Evaluation-protocol violation (e.g. single-class training set).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// API contract violation (e.g. backward on a non-scalar).
    #[error("contract error: {0}")]
    Contract(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn dimension(context: impl Into<String>, left: impl Into<String>, right: impl Into<String>) -> Self {
        Error::Dimension {
            context: context.into(),
            left: left.into(),
            right: right.into(),
        }
    }
}
