use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, widths or counts that do not match the fixed layout.
    #[error("structural error: {0}")]
    Structural(String),

    /// A value violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A delimited-text input could not be parsed. `line` is 1-based.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("missing or malformed header in {0}: expected `{1}`")]
    Header(String, String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used in the CLI's JSON diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Structural(_) => "structural",
            Error::Validation(_) => "validation",
            Error::Parse { .. } => "parse",
            Error::Header(..) => "header",
            Error::UndefinedCorrelation(_) => "undefined_correlation",
            Error::NonFinite(_) => "non_finite",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }
}
