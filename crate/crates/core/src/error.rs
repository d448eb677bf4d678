use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CcmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no toggleable dyads")]
    NoToggleableDyads,

    #[error("parse error at {source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl CcmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CcmError::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CcmError::Config(msg.into())
    }

    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        CcmError::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Whether the error stems from bad user data rather than a bug or I/O fault.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, CcmError::Io(_))
    }
}

pub type Result<T, E = CcmError> = std::result::Result<T, E>;
