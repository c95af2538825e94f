use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A row or document could not be parsed. `line` is 1-based and counts the header.
    #[error("{}{}: {message}", path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<input>".into()), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Parse {
        path: Option<PathBuf>,
        line: Option<u64>,
        message: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: Option<u64>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: None,
            line,
            message: message.into(),
        }
    }

    /// Attach a file path to a parse error produced by a reader-based parser.
    pub(crate) fn with_path(self, p: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse { line, message, .. } => Error::Parse {
                path: Some(p.into()),
                line,
                message,
            },
            other => other,
        }
    }

    /// Line number for parse errors.
    pub fn line(&self) -> Option<u64> {
        match self {
            Error::Parse { line, .. } => *line,
            _ => None,
        }
    }

    /// Path associated with the error, when there is one.
    pub fn path(&self) -> Option<&std::path::Path> {
        match self {
            Error::Io { path, .. } => Some(path),
            Error::Parse { path, .. } => path.as_deref(),
            _ => None,
        }
    }
}
