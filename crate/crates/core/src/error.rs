use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("duplicate paper id {0:?}")]
    DuplicateId(String),

    #[error("unknown paper id {0:?}")]
    UnknownPaper(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty distribution: {0}")]
    EmptyDistribution(String),

    #[error("not enough negatives: requested {requested}, support has {available}")]
    InsufficientSupport { requested: usize, available: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("backward called without a recorded forward pass")]
    MissingForwardRecord,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("no evaluable queries: {0}")]
    NoQueries(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
