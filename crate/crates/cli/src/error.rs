use std::path::PathBuf;

use interlab_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Io { .. } => 2,
            CliError::Verify(_) => 3,
            CliError::Core(e) => match e {
                CoreError::Config(_)
                | CoreError::Plan(_)
                | CoreError::Partition(_)
                | CoreError::Capacity { .. }
                | CoreError::TooFewPlayers(_)
                | CoreError::InvalidPair(_)
                | CoreError::PlayerIndex { .. }
                | CoreError::UnsupportedActivation(_) => 1,
                _ => 2,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
