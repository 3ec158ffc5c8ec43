use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("length mismatch: {what} (expected {expected}, got {got})")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("signal too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{0} is silent")]
    Silent(&'static str),
    #[error("malformed exchange file: {0}")]
    Format(String),
    #[error("truncated payload at byte offset {offset} (expected {expected} bytes total)")]
    Truncated { offset: u64, expected: u64 },
    #[error("stream label mismatch: expected {expected:?}, found {found:?}")]
    Labels {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{path}: {inner}")]
    File { path: PathBuf, inner: Box<Error> },
    #[error("wav: {0}")]
    Wav(hound::Error),
    #[error("{0}")]
    Io(std::io::Error),
    #[error("json: {0}")]
    Json(serde_json::Error),
}

// Causes are folded into the messages above rather than exposed as error
// sources, so reporters that walk the source chain print each cause once.
impl From<hound::Error> for Error {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(io) => Error::Io(io),
            other => Error::Wav(other),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}

impl Error {
    /// Attaches the offending file to an error.
    pub fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            inner: Box::new(self),
        }
    }
}
