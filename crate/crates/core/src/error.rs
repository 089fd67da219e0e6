use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {dimension} is {found}, expected {expected}")]
    Shape {
        context: &'static str,
        dimension: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("wrong IDX magic number: expected {expected}, found {found}")]
    WrongMagic { expected: u32, found: u32 },

    #[error("truncated IDX stream: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },

    #[error("not enough data: {required} examples required, {available} available")]
    InsufficientData { required: usize, available: usize },

    #[error("filter needs at least one {0} indicator client")]
    MissingIndicator(&'static str),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
