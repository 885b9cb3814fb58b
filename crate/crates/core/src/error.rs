use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed RAWT magic, version, dtype or header.
    #[error("format error: {0}")]
    Format(String),

    /// Payload shorter or longer than the header promises.
    #[error("length error: expected {expected} payload bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Input outside the mathematical domain of an operation (e.g. negative probabilities).
    #[error("domain error: {0}")]
    Domain(String),

    /// Localization discarded every candidate region.
    #[error("empty localization result: {0}")]
    EmptyResult(String),

    /// A loss needs a configuration that cannot produce it (e.g. contrastive loss with g = 1).
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
