use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("training diverged: non-finite value in `{param}`")]
    Divergence { param: String },

    #[error("label error: {0}")]
    Label(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt data: {0}")]
    Corruption(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("unsupported architecture: {0}")]
    UnsupportedArchitecture(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
