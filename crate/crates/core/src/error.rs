use std::path::PathBuf;

use thiserror::Error;

/// Errors reported by the segmentation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed image file: {0}")]
    Format(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate region: {0}")]
    DegenerateRegion(&'static str),

    #[error("non-finite {0} encountered; reduce the step size or steepness")]
    NonFinite(&'static str),

    #[error("polytope {polytope} is not in the neighborhood of ({x}, {y})")]
    NotInNeighborhood { polytope: usize, x: f64, y: f64 },

    #[error("need at least {needed} valid polytopes for clustering, found {found}")]
    TooFewPolytopes { needed: usize, found: usize },

    #[error("infeasible phantom: {0}")]
    InfeasiblePhantom(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateRegion(_) | Error::NonFinite(_) | Error::TooFewPolytopes { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
