use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("matrix dimensions must be at least 1x1, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite, even with diagonal jitter {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("rho must lie in [0, 1), got {0}")]
    InvalidRho(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("diagonal entry {index} of the inverse precision is not positive ({value:e})")]
    NonPositiveInverseDiagonal { index: usize, value: f64 },
    #[error("hyperparameter k became non-positive ({0:e})")]
    NonPositiveK(f64),
    #[error("k * Z_B is too close to zero ({0:e})")]
    ZeroDenominator(f64),
    #[error("column {0} of the estimated dictionary has zero norm")]
    ZeroColumn(usize),
    #[error("brute-force alignment supports at most {max} components, got {h}")]
    TooLarge { h: usize, max: usize },
}
