use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: line {line}, column {column}: {message}")]
    Format { path: PathBuf, line: u64, column: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(#[from] predvar::Error),

    #[error("every sweep cell failed; first failure: {0}")]
    SweepFailed(String),
}

impl CliError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(e) if is_config(e) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: u64, column: u64, message: impl Into<String>) -> Self {
        CliError::Format { path: path.into(), line, column, message: message.into() }
    }
}

fn is_config(e: &predvar::Error) -> bool {
    match e {
        predvar::Error::Config(_) | predvar::Error::Order(_) => true,
        predvar::Error::AtIteration { source, .. } => is_config(source),
        _ => false,
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
