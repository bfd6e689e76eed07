use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite input value at index {0}")]
    NonFinite(usize),

    #[error("field carries {modes} modes but the grid resolves at most {max}")]
    GridMismatch { modes: usize, max: usize },

    #[error("operator is defined on zero-mean input only (mean = {0:e})")]
    NonZeroMean(f64),

    #[error("kernel evaluated at singular point s = {0}")]
    KernelSingular(f64),

    #[error("kernel tail bound {achieved:e} not reached after {terms} terms")]
    KernelTail { terms: usize, achieved: f64 },

    #[error("quadrature did not converge (error estimate {0:e})")]
    Quadrature(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("Newton iteration failed after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Newton residual plateaued at {residual:e} after {iterations} iterations")]
    Plateau { iterations: usize, residual: f64 },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("certification failure: {0}")]
    Certification(String),

    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
