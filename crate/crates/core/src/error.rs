use thiserror::Error;

/// Errors raised by kernel construction, partition generation and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid kernel spec: {0}")]
    InvalidSpec(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error(
        "kernel matrix is asymmetric (relative asymmetry {asymmetry:.3e} exceeds {tolerance:.1e})"
    )]
    AsymmetricInput { asymmetry: f64, tolerance: f64 },
    #[error("diagonal entry {index} is {value:.3e}, not above {eps:.1e}")]
    DegenerateDiagonal { index: usize, value: f64, eps: f64 },
    #[error("cluster count k = {k} is invalid for n = {n}")]
    InvalidK { k: usize, n: usize },
    #[error("invalid neighbourhood size tau = {tau} for n = {n}")]
    InvalidTau { tau: usize, n: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("view {view} has non-positive residual {residual:.3e}")]
    DegenerateResidual { view: usize, residual: f64 },
    #[error("all alignment scores are non-positive")]
    DegenerateDelta,
    #[error("objective decreased from {previous} to {current} at iteration {iteration}")]
    NonMonotoneObjective {
        iteration: usize,
        previous: f64,
        current: f64,
    },
    #[error("solver run did not retain per-iteration iterates")]
    MissingTrace,
    #[error("delta = {0} is outside (0, 1)")]
    InvalidDelta(f64),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
