use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("dense assembly of dimension {dim} exceeds cap {cap}; use matrix-free operators")]
    DenseCapExceeded { dim: usize, cap: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("derivative of the nonlinearity unavailable and finite-difference fallback disabled")]
    DerivativeUnavailable,

    #[error("{what} did not converge within {iterations} iterations")]
    NotConverged { what: String, iterations: usize },

    #[error("geometry violated: {0}")]
    GeometryViolated(String),

    #[error("not anti-coercive: {0}")]
    NotAntiCoercive(String),

    #[error("mesh too coarse: {0}")]
    MeshTooCoarse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
