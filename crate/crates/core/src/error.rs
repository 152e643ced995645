use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The Gram matrix could not be factored even after the maximum jitter.
    #[error("ill-conditioned data: {0}")]
    IllConditioned(String),

    /// A query left the region on which the error bound is valid.
    #[error("domain violation: {0}")]
    Domain(String),

    #[error("gain synthesis failed: {0}")]
    Synthesis(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    /// A pipeline step ran before the step producing its input.
    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
