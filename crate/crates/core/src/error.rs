use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic in {file}: expected {expected:?}, found {found:?}")]
    BadMagic {
        file: PathBuf,
        expected: String,
        found: String,
    },

    #[error("truncated or oversized payload in {file}: expected {expected} bytes, found {actual}")]
    Truncated {
        file: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("unsupported format version {found} (reader supports {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("duplicate tensor name {0:?}")]
    DuplicateTensor(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("input too short for conv stack: length {len}, minimum {min}")]
    InputTooShort { len: usize, min: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
