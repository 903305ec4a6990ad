use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("manifest line {line}: unknown label {token:?}")]
    UnknownLabel { line: usize, token: String },

    #[error("{context}: non-finite value at index {index}")]
    NonFinite { context: String, index: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("shape error at layer {layer}: {reason}")]
    LayerShape { layer: usize, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("numeric failure at iteration {iteration}: {reason}")]
    Numeric { iteration: usize, reason: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("insufficient data for class {class}: have {have}, need {need}")]
    InsufficientData {
        class: String,
        have: usize,
        need: usize,
    },
}

impl Error {
    /// True for NaN/Inf-style failures (CLI exit code 3); everything else
    /// is treated as a data error (exit code 2).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric { .. } | Error::NonFinite { .. })
    }
}
