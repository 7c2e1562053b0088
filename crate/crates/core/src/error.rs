use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch in {what}: {left} vs {right}")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    MagicMismatch { expected: String, found: String },

    #[error("truncated {section}: expected {expected} bytes, found {found}")]
    Truncated {
        section: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("input of length {len} is shorter than the minimum {min}")]
    InputTooShort { len: usize, min: usize },

    #[error("need at least {needed} subjects, got {got}")]
    TooFewSubjects { needed: usize, got: usize },

    #[error("filterbank under-resolved: filters {first} and {second} share FFT bin {bin}")]
    FilterbankUnderResolved {
        first: usize,
        second: usize,
        bin: usize,
    },

    #[error("class index {0} out of range 0..9")]
    ClassOutOfRange(usize),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Attach a path to an error raised while handling that file.
    pub fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// True for failures of the arithmetic itself rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Divergence { .. } | Error::Numerical(_) => true,
            Error::File { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
