use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CageError {
    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("anomaly model is not trained")]
    Untrained,

    #[error("training diverged: loss is NaN at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("training set digest mismatch: model has {model}, knowledge base has {kb}")]
    DigestMismatch { model: String, kb: String },

    #[error("hook `{hook}` failed at tick {tick}: {message}")]
    Hook { hook: String, tick: u64, message: String },
}

impl CageError {
    pub fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        CageError::Invalid {
            what: what.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CageError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CageError> = std::result::Result<T, E>;
