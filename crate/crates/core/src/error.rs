use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible.
    #[error("shape error: {0}")]
    Shape(String),

    /// A caller-supplied argument is outside the accepted range.
    #[error("argument error: {0}")]
    Argument(String),

    /// A mathematical operation was applied outside its domain (e.g. log of 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// Architecture description could not be parsed or does not shape-check.
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Dataset layout, manifest or image decoding problem.
    #[error("data error: {0}")]
    Data(String),

    /// Non-finite loss or gradient during training.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error on {}: {source}", path.display())]
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

    pub(crate) fn config(line: usize, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            message: message.into(),
        }
    }
}
