use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unreachable clarity: target {target} is not below the maximum attainable clarity {max}")]
    UnreachableClarity { target: f64, max: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("reference underrun: need {needed} samples from index {start}, reference has {available}")]
    ReferenceUnderrun {
        start: usize,
        needed: usize,
        available: usize,
    },

    #[error("singular matrix in {0}")]
    Singular(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
