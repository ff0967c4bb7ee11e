use std::path::Path;

use thiserror::Error;

/// Exit status of a successful run.
pub const EXIT_OK: i32 = 0;
/// Unreadable or malformed input files.
pub const EXIT_INPUT: i32 = 3;
/// Inputs that parse but are inconsistent: bad manifests, configs, shapes,
/// checkpoints for another architecture.
pub const EXIT_VALIDATION: i32 = 4;
/// Failures while running, such as a diverging training run.
pub const EXIT_RUNTIME: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }
}

impl From<mpijpeg::Error> for CliError {
    fn from(e: mpijpeg::Error) -> Self {
        use mpijpeg::Error::*;
        let msg = e.to_string();
        match e {
            Io { .. } | Png { .. } | Jpeg { .. } | JpegUnsupported { .. } | Json(_) => {
                CliError::Input(msg)
            }
            CorruptCheckpoint(_) => CliError::Input(msg),
            Shape(_)
            | Geometry(_)
            | Config(_)
            | Manifest { .. }
            | CheckpointVersion { .. }
            | Architecture(_)
            | Dataset(_) => CliError::Validation(msg),
            NonFiniteLoss { .. } => CliError::Runtime(msg),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
