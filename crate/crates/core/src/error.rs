use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DseError>;

#[derive(Debug, Error)]
pub enum DseError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid {context}: {message}")]
    Validation { context: String, message: String },

    #[error(
        "insufficient storage: layer `{layer}` cannot be placed ({needed_kb:.1} KB left unplaced)"
    )]
    InsufficientStorage { layer: String, needed_kb: f64 },

    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error(
        "solver did not converge after {iterations} iterations (relative residual {residual:.3e})"
    )]
    Solver { iterations: usize, residual: f64 },

    #[error("internal error: {0}")]
    Internal(String),
}

impl DseError {
    pub(crate) fn validation(context: impl Into<String>, message: impl Into<String>) -> Self {
        DseError::Validation {
            context: context.into(),
            message: message.into(),
        }
    }
}
