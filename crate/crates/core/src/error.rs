use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("io error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("target exceeds window: target needs {needed} tokens, window holds {max_len}")]
    TargetExceedsWindow { needed: usize, max_len: usize },

    #[error("no target span in instance")]
    NoTargetSpan,

    #[error("token id {token} out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: usize },

    #[error("sequence of {len} tokens exceeds max_positions {max_positions}")]
    SequenceTooLong { len: usize, max_positions: usize },

    #[error("empty loss support")]
    EmptyLossSupport,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("lora rank mismatch: {0}")]
    RankMismatch(String),

    #[error("degenerate correlation: zero variance")]
    DegenerateCorrelation,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("label does not match objective: {0}")]
    LabelMismatch(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
