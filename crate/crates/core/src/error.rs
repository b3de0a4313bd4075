use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no parseable rows in {path}")]
    NoRows { path: PathBuf },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("non-monotone timestamp {timestamp} at row {row} (more than {window}s behind)")]
    NonMonotone { row: usize, timestamp: i64, window: i64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid device catalog: {0}")]
    Catalog(String),

    #[error("invalid activity mapping: {0}")]
    Mapping(String),

    #[error("invalid signal: {0}")]
    Signal(String),

    #[error("{kind} signal not available for horizon starting at {horizon_start}")]
    Coverage { kind: String, horizon_start: i64 },

    #[error("insufficient history: horizon at hour {hour} needs {needed} hours of training data")]
    InsufficientHistory { hour: usize, needed: usize },

    #[error("feature schema mismatch: model expects {expected} columns, got {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("empty hyperparameter grid")]
    EmptyGrid,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown device `{0}`")]
    UnknownDevice(String),

    #[error("serialization failed: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
