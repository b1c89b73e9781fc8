use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unknown label `{label}` at line {line}")]
    UnknownLabel { label: String, line: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    Dimension {
        expected: usize,
        found: usize,
        context: String,
    },

    #[error("word `{0}` not found in embedding table")]
    MissingWord(String),

    #[error("label/head mismatch: {0}")]
    LabelMismatch(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("surrogate fit diverged for label `{0}`")]
    Divergence(String),

    #[error("position {position} out of range for sentence of length {len}")]
    PositionOutOfRange { position: usize, len: usize },

    #[error("augmentation record for `{0}` is sourced from the test split")]
    TestSplitSource(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("vocabulary hash mismatch: checkpoint {expected}, vocabulary {found}")]
    VocabHash { expected: String, found: String },

    #[error("human evaluation sheet row {row}: {message}")]
    SheetRow { row: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
