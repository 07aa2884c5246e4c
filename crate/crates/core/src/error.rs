use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{what} contains non-finite values")]
    NonFinite { what: String },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("no valid pixels")]
    NoValidPixels,

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed file {}: {msg}", .path.display())]
    Malformed { path: PathBuf, msg: String },

    #[error("non-finite loss term `{term}`")]
    NanLoss { term: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("epoch {epoch} out of range (0..{epochs})")]
    EpochOutOfRange { epoch: usize, epochs: usize },

    #[error("io error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Candle(#[from] candle_core::Error),
}

impl Error {
    pub fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
