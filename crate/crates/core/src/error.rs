use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("image too small: {0}")]
    TooSmall(String),

    #[error("normalization undefined: {0}")]
    ZeroVariance(String),

    #[error("region out of bounds: {0}")]
    OutOfBounds(String),

    #[error("no images found in {0}")]
    EmptyDirectory(PathBuf),

    #[error("failed to read {path}: {reason}")]
    ImageRead { path: PathBuf, reason: String },

    #[error("{} unreadable image file(s), first {}: {}; {} other file(s) loadable", failed.len(), failed[0].0.display(), failed[0].1, loadable.len())]
    ImageLoad { failed: Vec<(PathBuf, String)>, loadable: Vec<PathBuf> },

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("statistic undefined: {0}")]
    Statistic(String),

    #[error("calibration failure: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
