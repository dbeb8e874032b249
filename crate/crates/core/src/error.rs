use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by model construction, propagation and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// A covariance or information matrix lost positive semidefiniteness
    /// beyond what round-off can explain.
    #[error(
        "numerical instability in {what}: min eigenvalue {min_eigenvalue:e}; try a smaller dt"
    )]
    NumericalInstability {
        what: &'static str,
        min_eigenvalue: f64,
    },

    #[error("degenerate Gaussian combination: {0}")]
    DegenerateCombination(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that stem from bad inputs rather than numerics or I/O.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidDimension(_)
                | Error::Validation(_)
                | Error::Config(_)
                | Error::Json(_)
                | Error::DegenerateCombination(_)
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NumericalInstability { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
