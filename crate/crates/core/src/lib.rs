//! Sparse matrix factorization `V ≈ A·B` by variational Bayes, with a Gaussian
//! prior on the dictionary `A`, a Laplace prior on the codes `B`, and the Laplace
//! scale `k` tuned toward the zero point of the prior's normalization factor.
//!
//! Numerics are generic over [`Scalar`] (`f32`, `f64`); the aliases below fix
//! the scalar for the common case.

// `!(x > 0)` style guards are there so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::assign_op_pattern)]
#![allow(clippy::too_many_arguments)]

pub mod error;
pub mod linalg;
pub mod metrics;
pub mod scalar;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::{erf, erf_paper, spd_inverse, DenseMatrix, SpdInverse, SpdMatrix};
pub use metrics::{
    align_and_rmse_a, brute_force_alignment, evaluate, rmse_b, rmse_v, sparsity_b, Alignment, MetricsReport,
    SPARSITY_THRESHOLD,
};
pub use scalar::Scalar;
pub use solver::{
    run, run_from, ErfConvention, FactorState, MetricHook, Mode, RunOutput, RunTrace, SolverConfig, Termination,
    TraceMetrics, TraceRecord,
};
pub use synth::{observe, sample_ground_truth, GroundTruth, Noise, ObservationMatrix, Provenance};

pub type Matrix = DenseMatrix<f64>;
pub type Matrix32 = DenseMatrix<f32>;
pub type State = FactorState<f64>;
pub type State32 = FactorState<f32>;
pub type Output = RunOutput<f64>;
pub type Truth = GroundTruth<f64>;
pub type Observation = ObservationMatrix<f64>;
