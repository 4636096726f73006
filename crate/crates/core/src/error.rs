use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate weight matrix (sigma = {sigma:e})")]
    DegenerateWeight { sigma: f64 },

    #[error("loss node must be a 1x1 scalar, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty record")]
    EmptyRecord,

    #[error("graph has no atoms")]
    EmptyGraph,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph coordinates are not centered (|mean| = {0:e}); canonicalize first")]
    NotCentered(f64),

    #[error("nothing to explain: graph has no edges")]
    NothingToExplain,

    #[error("exact Shapley enumeration supports at most {max} edges, got {got}")]
    TooManyPlayers { max: usize, got: usize },

    #[error("explanation does not match graph: {0}")]
    ExplanationMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }
}
