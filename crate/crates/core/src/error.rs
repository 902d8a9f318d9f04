use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the mapping engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layer dimensions {dims:?}: {reason}")]
    InvalidDims { dims: Vec<usize>, reason: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite input coordinate {0:?}")]
    NonFiniteInput(Vec<f64>),

    #[error("shape mismatch: expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("numerical divergence in {term} term ({detail})")]
    Divergence { term: &'static str, detail: String },

    #[error("training diverged at frame {frame}, epoch {epoch}: {source}")]
    TrainingDiverged {
        frame: usize,
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("unsupported depth image {path}: {reason}")]
    DepthImage { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True when the error (or its cause) is a numerical divergence.
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::Divergence { .. } | Error::TrainingDiverged { .. } => true,
            Error::Frame { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
