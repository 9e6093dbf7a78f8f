use thiserror::Error;

use crate::partition::ZoneId;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum SvannError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point ({x}, {y}) lies outside the study-area extent")]
    OutOfExtent { x: f64, y: f64 },
    #[error("no model is anchored in zone {0}")]
    NoModelForZone(ZoneId),
    #[error("no anchor has any training sample in range")]
    EmptyTraining,
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse error category, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
    Filesystem,
}

impl SvannError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            SvannError::Config(_) | SvannError::InvalidArgument(_) => ErrorKind::Config,
            SvannError::Numeric(_) => ErrorKind::Numeric,
            SvannError::Io { .. } => ErrorKind::Filesystem,
            SvannError::InvalidInput(_)
            | SvannError::OutOfExtent { .. }
            | SvannError::NoModelForZone(_)
            | SvannError::EmptyTraining
            | SvannError::Data(_)
            | SvannError::Json(_)
            | SvannError::Csv(_) => ErrorKind::Data,
        }
    }

    /// Filesystem error on `path`.
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        SvannError::Io { path: path.as_ref().display().to_string(), source }
    }
}

pub type Result<T> = std::result::Result<T, SvannError>;
