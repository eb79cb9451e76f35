use thiserror::Error;

/// Errors raised by the discretization, solver and estimator layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate tetrahedron {tet}: volume {volume:e}")]
    DegenerateElement { tet: usize, volume: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite signal value at t = {0}")]
    NonFiniteSignal(f64),

    #[error("Parseval remainder is negative beyond tolerance: {0:e}")]
    InconsistentRemainder(f64),

    #[error("right-hand side is not orthogonal to the discrete gradient space (relative defect {0:e})")]
    Gauging(f64),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("missing Fourier mode {0}")]
    MissingMode(usize),

    #[error("nonpositive error quantity {0:e} in efficiency index")]
    NonPositiveError(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
