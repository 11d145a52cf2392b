use thiserror::Error;

use crate::ingest::wire::WireError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{branch} layer {index}: {source}")]
    Layer {
        branch: &'static str,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "kernel matrix factorization failed after jitter {max_jitter:e} \
         (n = {n}, diag range [{diag_min:e}, {diag_max:e}])"
    )]
    Factorization {
        n: usize,
        max_jitter: f64,
        diag_min: f64,
        diag_max: f64,
    },

    #[error("unsorted stream: {0}")]
    Unsorted(String),

    #[error("scene generation failed: {0}")]
    Scene(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stream error at frame {frame}: {message}")]
    Stream { frame: usize, message: String },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Wire(#[from] WireError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn in_layer(self, branch: &'static str, index: usize) -> Self {
        Error::Layer {
            branch,
            index,
            source: Box::new(self),
        }
    }
}
