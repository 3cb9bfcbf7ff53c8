use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A file was readable but its contents did not match the expected format.
    #[error("{0}")]
    Format(String),

    /// A value violates a documented precondition (bad hyperparameter, degenerate box, ...).
    #[error("{0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The optimizer produced a non-finite objective, usually because the step size is too large.
    #[error("non-finite objective at iteration {iteration} (restart {restart}); reduce the step size")]
    Diverged { restart: usize, iteration: usize },

    #[error("singular value decomposition did not converge")]
    SvdFailed,

    #[error("feature hash mismatch: model has {model}, data has {data}")]
    FeatureHash { model: String, data: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
