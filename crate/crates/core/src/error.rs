use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("label {label} out of range for {num_classes} classes")]
    Label { label: usize, num_classes: usize },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("activation {0} is not twice differentiable")]
    UnsupportedActivation(&'static str),
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("model file format: {0}")]
    Format(String),
    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("idx file {path}: {reason}")]
    Idx { path: PathBuf, reason: String },
    #[error("player {index} out of range for a game with {players} players")]
    PlayerIndex { index: usize, players: usize },
    #[error("a pair interaction needs two distinct players, got ({0}, {0})")]
    InvalidPair(usize),
    #[error("exact enumeration over {players} players exceeds the limit of {limit}; use a sampled estimator")]
    Capacity { players: usize, limit: usize },
    #[error("average interaction needs at least 2 players, got {0}")]
    TooFewPlayers(usize),
    #[error("invalid sampling plan: {0}")]
    Plan(String),
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("invalid attack config: {0}")]
    Config(String),
    #[error("{0}")]
    Analysis(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
