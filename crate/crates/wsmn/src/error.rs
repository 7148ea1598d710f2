use std::path::PathBuf;

/// Errors surfaced by the watermarking pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {reason}")]
    Io { path: PathBuf, reason: String },

    #[error("corrupt input: {0}")]
    CorruptInput(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("bad dimensions: {0}")]
    BadDimensions(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing metadata: {0}")]
    MissingMetadata(String),
}

pub type Result<T> = std::result::Result<T, Error>;
