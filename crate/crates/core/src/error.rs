use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the forecasting engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{provider}: network failure: {message}")]
    Network { provider: String, message: String },

    #[error("{provider}: credentials rejected (HTTP {status})")]
    Credential { provider: String, status: u16 },

    #[error("{provider}: unexpected response: {message}")]
    Upstream { provider: String, message: String },

    #[error("{module}: no signal ({reason})")]
    NoSignal {
        module: &'static str,
        reason: String,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
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

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn no_signal(module: &'static str, reason: impl Into<String>) -> Self {
        Error::NoSignal {
            module,
            reason: reason.into(),
        }
    }

    /// True for failures that a caller may treat as a module abstention.
    pub fn is_no_signal(&self) -> bool {
        matches!(self, Error::NoSignal { .. })
    }

    /// True for failures caused by a remote service.
    pub fn is_upstream(&self) -> bool {
        matches!(
            self,
            Error::Network { .. } | Error::Credential { .. } | Error::Upstream { .. }
        )
    }
}
