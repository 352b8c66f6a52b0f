use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector dimension must be at least 1")]
    ZeroDimension,

    #[error("invalid bit value {value:?} at position {position}")]
    InvalidBit { position: usize, value: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("malformed data at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("unsupported snapshot version {found} (this build reads version {supported})")]
    Version { found: u16, supported: u16 },

    #[error("line {line}: {reason}")]
    Text { line: usize, reason: String },

    #[error("point set is empty")]
    Empty,

    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
