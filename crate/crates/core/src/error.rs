use thiserror::Error;

use crate::grid::DiscreteDualResult;
use crate::linalg::SpdCheck;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error(
        "matrix is not positive definite (min eigenvalue {:.6e}, max eigenvalue {:.6e})",
        .0.min_eigenvalue,
        .0.max_eigenvalue
    )]
    NotPositiveDefinite(SpdCheck),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("discrete dual solver did not converge within {} iterations", .0.iterations)]
    NotConverged(Box<DiscreteDualResult>),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("certificate failure: {0}")]
    Certificate(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
