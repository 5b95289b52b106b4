use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("training error at epoch {epoch}, step {step}: {message}")]
    Training {
        epoch: usize,
        step: usize,
        message: String,
    },

    #[error("empty result: {0}")]
    Empty(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class: 1 usage/config, 2 data/format,
    /// 3 numerical/training.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Validation(_)
            | Error::Shape(_)
            | Error::Parse { .. }
            | Error::Format(_)
            | Error::Protocol(_)
            | Error::Empty(_)
            | Error::Generation(_)
            | Error::Io { .. } => 2,
            Error::Numerical(_) | Error::Training { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::Parse { .. } => "parse",
            Error::Format(_) => "format",
            Error::Protocol(_) => "protocol",
            Error::Numerical(_) => "numerical",
            Error::Training { .. } => "training",
            Error::Empty(_) => "empty",
            Error::Generation(_) => "generation",
            Error::Io { .. } => "io",
        }
    }
}
