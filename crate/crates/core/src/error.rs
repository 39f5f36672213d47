//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or invalid input data (bad field values, shape
    /// mismatches, missing files, malformed formats).
    #[error("configuration error: {0}")]
    Config(String),

    /// Training produced a non-finite loss. Carries a dump of the last known
    /// state so the failure can be diagnosed.
    #[error("numerical failure at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors that should map to the CLI's "numerical failure" exit
    /// code rather than the configuration one.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Diverged { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
