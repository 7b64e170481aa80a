use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("homogeneous coordinates (0, 0) do not define a point")]
    ZeroVector,
    #[error("matrix is not unimodular: |det - 1| = {0:e}")]
    NotUnimodular(f64),
    #[error("-k(K_X + Delta) is not a line bundle: degree {0} is not a nonnegative integer")]
    NotALineBundle(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("divisor has no components")]
    EmptyDivisor,
    #[error("operation requires genus {expected}, pair has genus {got}")]
    WrongGenus { expected: u32, got: u32 },
    #[error("invalid collision stratum: {0}")]
    BadStratum(String),
    #[error("hermitian matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("quadrature mass underflowed to zero")]
    QuadratureUnderflow,
    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:e})")]
    MaxIterations { iterations: usize, grad_norm: f64 },
    #[error("partition function is divergent")]
    DivergentPartition,
    #[error("frozen points meet the zero locus")]
    DegenerateFreeze,
    #[error("section degree {got} does not match representation degree {expected}")]
    DegreeMismatch { expected: usize, got: usize },
    #[error("metric is not smooth: {0}")]
    NonSmoothMetric(String),
    #[error("target density is not normalizable (witness: {0})")]
    UnstableTarget(String),
    #[error("configuration lies on the singular locus ({0})")]
    OnSingularLocus(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
