use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: file contains no data rows")]
    EmptyFile { path: String },

    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("network index {index} outside registry of {len} networks")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("network index {0} appears twice in one scan")]
    DuplicateReading(usize),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate normalizer for feature {0}")]
    DegenerateNormalizer(usize),

    #[error("model format: {0}")]
    Model(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
