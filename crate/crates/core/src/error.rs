use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Cholesky factorization broke down; `pivot` is the zero-based column.
    #[error("matrix is not positive definite (failed at pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("domain error: {0}")]
    DomainError(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("node {node} out of range for {p} nodes")]
    NodeOutOfRange { node: usize, p: usize },
    #[error("too few samples: need at least {needed}, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    /// A covariance sub-block is numerically singular.
    #[error("singular block (condition number {condition:e})")]
    SingularBlock { condition: f64 },
    #[error("invalid penalty parameter lambda = {0}")]
    InvalidLambda(f64),
    #[error("zero variance in two-sample comparison")]
    ZeroVariance,
}
