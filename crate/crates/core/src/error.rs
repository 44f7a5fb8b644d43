use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition of an operation was violated (wrong shape, index out of range).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// A file exists but does not decode (manifest, checkpoint, image).
    #[error("format error in {}: {field}: {message}", path.display())]
    Format {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A metric was requested over an empty set (e.g. PCK with no visible joints).
    #[error("undefined: {0}")]
    Undefined(String),

    #[error("training diverged at step {step}: {message}")]
    Divergence { step: usize, message: String },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn format(path: impl Into<PathBuf>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Contract(_) => "contract",
            Error::Config { .. } => "config",
            Error::Argument(_) => "argument",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
            Error::Undefined(_) => "undefined",
            Error::Divergence { .. } => "divergence",
        }
    }
}

macro_rules! ensure_contract {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure_contract;
