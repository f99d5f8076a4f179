use thiserror::Error;

use crate::analysis::KwwFit;

pub type Result<T> = std::result::Result<T, XpcsError>;

#[derive(Debug, Error)]
pub enum XpcsError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("frame {index} has zero norm (dead-detector frame)")]
    ZeroFrame { index: usize },

    #[error("all-zero matrix has no singular spectrum")]
    ZeroMatrix,

    #[error("requested rank {requested} exceeds achievable rank {achievable}")]
    Rank { requested: usize, achievable: usize },

    #[error("mask error: {0}")]
    Mask(String),

    #[error("encoder binding mismatch: store was compressed with {expected}, got {found}")]
    Binding { expected: String, found: String },

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("truncated input at byte offset {offset}: expected {expected} more bytes")]
    Length { offset: u64, expected: u64 },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("fit degenerate: {0}")]
    FitDegenerate(String),

    #[error("fit did not converge after {iterations} iterations")]
    FitNoConvergence { iterations: usize, best: KwwFit },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl XpcsError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        XpcsError::Shape(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        XpcsError::Contract(msg.into())
    }
}
