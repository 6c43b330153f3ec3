use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("I/O error on {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("flat binary: {0}")]
    Format(String),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("experiment failed: {0}")]
    Core(#[from] regnoise_core::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn field(name: impl Into<String>, message: impl Into<String>) -> LabError {
    LabError::Field { field: name.into(), message: message.into() }
}
