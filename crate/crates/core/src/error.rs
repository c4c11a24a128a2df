use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("read error: {0}")]
    Read(#[from] std::io::Error),

    #[error("no valid records ({rejected} rejected lines)")]
    NoRecords { rejected: usize },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("invalid code sets: {0}")]
    CodeSets(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no positive samples for gap {gap_days} days")]
    NoPositives { gap_days: u32 },

    #[error("insufficient samples: {0}")]
    Insufficient(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("unknown code {0:?}")]
    UnknownCode(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("all positions are masked")]
    AllMasked,

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
