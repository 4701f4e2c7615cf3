//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by basis construction, assembly, and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("symmetric eigenvalue solve failed: {0}")]
    EigenFailure(String),

    #[error("quadrature weight {index} is not positive ({value:e}); the recurrence coefficients are inconsistent with a positive measure")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("integrand is not finite at quadrature node {node} (xi = {xi:e})")]
    NonFiniteIntegrand { node: usize, xi: f64 },

    #[error("quadrature rule of exactness degree {available} cannot integrate moment products of degree {needed} exactly")]
    InsufficientExactness { needed: usize, available: usize },

    #[error("moment tensors of order {needed} were requested but only order {available} is stored")]
    MomentOrderUnavailable { needed: usize, available: usize },

    #[error("moment tensors of dimension {available} are too small for basis/expansion dimension {needed}")]
    TensorTooSmall { needed: usize, available: usize },

    #[error("factorization failed at quadrature node {node} (xi = {xi:e}): {reason}")]
    NodeFactorization {
        node: usize,
        xi: f64,
        reason: String,
    },

    #[error("coefficient field is not positive at (x, y) = ({x}, {y}) for xi = {xi:e}")]
    NonPositiveField { x: f64, y: f64, xi: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    SpdViolation(String),

    #[error("coupled system matrix is singular (smallest pivot estimate {smallest_pivot:e})")]
    SingularSystem { smallest_pivot: f64 },

    #[error("{quantity} has zero norm; the relative error measure is undefined")]
    ZeroDenominator { quantity: &'static str },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("failed to parse study rows: {0}")]
    CsvParse(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
