use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("degenerate energy: {0}")]
    DegenerateEnergy(&'static str),
    #[error("signal too short: {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("malformed spectra: {0}")]
    MalformedSpectra(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("undefined decay: {0}")]
    UndefinedDecay(String),
    #[error("missing noise for a noisy example")]
    MissingNoise,
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("wav error in {path:?}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("io error in {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::RateMismatch(..) => "rate-mismatch",
            Error::DegenerateEnergy(_) => "degenerate-energy",
            Error::TooShort { .. } => "too-short",
            Error::MalformedSpectra(_) => "malformed-spectra",
            Error::Shape(_) => "shape",
            Error::Param(_) => "param",
            Error::UndefinedDecay(_) => "undefined-decay",
            Error::MissingNoise => "missing-noise",
            Error::Parse { .. } => "parse",
            Error::Wav { .. } => "wav",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Param(msg.into())
}
