use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed JPEG at byte {offset}: {message}")]
    Jpeg { offset: usize, message: String },

    #[error("unsupported JPEG feature at byte {offset}: {message}")]
    JpegUnsupported { offset: usize, message: String },

    #[error("invalid manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint does not match architecture: {0}")]
    Architecture(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("non-finite loss at step {step}: {terms}")]
    NonFiniteLoss { step: u64, terms: String },

    #[error("PNG error for {path}: {message}")]
    Png { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn jpeg(offset: usize, msg: impl Into<String>) -> Self {
        Error::Jpeg {
            offset,
            message: msg.into(),
        }
    }
}
