//! Variational-Bayes sparse factorization `V ≈ ā·b̄` with a Gaussian prior on the
//! dictionary `A` and a Laplace prior of scale `k` on the codes `B`.
//!
//! In tuned mode `k` is moved toward the zero point of the normalization factor
//! `Z_B` by a partial update, and the loop stops once `Z_B` falls to the
//! configured threshold. Fixed-k mode keeps `k` constant and runs to the
//! iteration cap.

mod update;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SpdMatrix};
use crate::scalar::Scalar;
use crate::synth::gaussian_matrix;

pub use update::{compute_omega, compute_zb, update_a, update_b, update_hat_sigma_b, update_k, zb_sum};

/// How `k` evolves across iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    Tuned,
    FixedK { k: f64 },
}

/// Which error function enters the Laplace correction terms and `Z_B`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErfConvention {
    /// `erf(x) = (2/√π)∫₀ˣ e^{−t²} dt`; makes the mean shift odd in the ridge term
    /// and `Z_B = 1 − Σ E|b|/k`.
    #[default]
    Standard,
    /// `(2/√π)∫ₓ^∞ e^{−t²} dt` (= `erfc`), see [`crate::linalg::erf_paper`].
    Complementary,
}

impl ErfConvention {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            ErfConvention::Standard => crate::linalg::erf(x),
            ErfConvention::Complementary => crate::linalg::erf_paper(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Noise standard deviation, assumed known.
    pub sigma: f64,
    /// Diagonal of the prior covariance of `A`; `None` means all ones.
    pub c_a_diag: Option<Vec<f64>>,
    /// Partial-update rate of `k`.
    pub epsilon: f64,
    /// Initial `k`; must exceed the first `S` for `Z_B` to start near 1.
    pub k0: f64,
    pub zb_threshold: f64,
    pub max_iters: u64,
    pub mode: Mode,
    pub init_seed: u64,
    /// Record every `stride`-th iteration in the trace (the first and last are always kept).
    pub stride: u64,
    pub erf: ErfConvention,
    /// Build the ridge term of the b̄ update from the previous iterate of ā
    /// instead of the current one.
    pub ridge_uses_previous_a: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            sigma: 0.05,
            c_a_diag: None,
            epsilon: 0.1,
            k0: 1e8,
            zb_threshold: 1e-5,
            max_iters: 1_000_000,
            mode: Mode::Tuned,
            init_seed: 0,
            stride: 1,
            erf: ErfConvention::Standard,
            ridge_uses_previous_a: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, h: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(format!("epsilon must lie in (0, 1], got {}", self.epsilon));
        }
        if !(self.k0 > 0.0 && self.k0.is_finite()) {
            return bad(format!("k0 must be positive, got {}", self.k0));
        }
        if !(self.zb_threshold > 0.0) {
            return bad(format!("zb_threshold must be positive, got {}", self.zb_threshold));
        }
        if let Mode::FixedK { k } = self.mode {
            if !(k > 0.0 && k.is_finite()) {
                return bad(format!("fixed k must be positive, got {k}"));
            }
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if let Some(c) = &self.c_a_diag {
            if c.len() != h {
                return bad(format!("c_a_diag has {} entries, expected {h}", c.len()));
            }
            if c.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return bad("c_a_diag entries must be positive".into());
            }
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn c_a(&self, h: usize) -> f64 {
        self.c_a_diag.as_ref().map_or(1.0, |c| c[h])
    }

    fn initial_k(&self) -> f64 {
        match self.mode {
            Mode::Tuned => self.k0,
            Mode::FixedK { k } => k,
        }
    }
}

/// Everything one iteration reads and writes.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState<T> {
    /// Means of `A`, `L×H`.
    pub a_bar: DenseMatrix<T>,
    /// Means of `B`, `H×M`.
    pub b_bar: DenseMatrix<T>,
    /// `(Σ_A)_hh`, identical for every row `l`.
    pub sigma_a_diag: Vec<T>,
    /// `(Σ_B)_hh` for every column `m`, stored `H×M`.
    pub sigma_b_diag: DenseMatrix<T>,
    pub hat_sigma_a: SpdMatrix<T>,
    pub hat_sigma_a_inv: SpdMatrix<T>,
    pub hat_sigma_b: SpdMatrix<T>,
    pub hat_sigma_b_inv: SpdMatrix<T>,
    /// `hat-Σ_B⁻¹·āᵀ·V`, the numerator of ω.
    pub ridge: DenseMatrix<T>,
    pub omega: DenseMatrix<T>,
    pub k: T,
    /// `+∞` before the first iteration.
    pub z_b: T,
    pub iter: u64,
    /// Previous ā; only tracked when the stale-ridge variant is enabled.
    pub a_prev: Option<DenseMatrix<T>>,
    pub jitter_a: f64,
    pub jitter_b: f64,
    pub clamped_variances: u64,
    pub min_unclamped_variance: f64,
}

impl<T: Scalar> FactorState<T> {
    /// Random Gaussian means from `cfg.init_seed`, `Σ_B = 1`, `k = k0`.
    pub fn init(cfg: &SolverConfig, l: usize, m: usize, h: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let a_bar = gaussian_matrix(l, h, &mut rng)?;
        let b_bar = gaussian_matrix(h, m, &mut rng)?;
        Self::from_factors(a_bar, b_bar, DenseMatrix::filled(h, m, T::one())?, cfg)
    }

    /// State seeded with explicit means and `Σ_B`.
    pub fn from_factors(
        a_bar: DenseMatrix<T>,
        b_bar: DenseMatrix<T>,
        sigma_b_diag: DenseMatrix<T>,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        let (l, h) = a_bar.shape();
        let m = b_bar.cols();
        if b_bar.rows() != h {
            return Err(Error::DimensionMismatch {
                op: "FactorState::from_factors",
                expected: (h, m),
                found: b_bar.shape(),
            });
        }
        if sigma_b_diag.shape() != (h, m) {
            return Err(Error::DimensionMismatch {
                op: "FactorState::from_factors",
                expected: (h, m),
                found: sigma_b_diag.shape(),
            });
        }
        let _ = l;
        let eye = SpdMatrix::new(DenseMatrix::identity(h)?)?;
        Ok(Self {
            a_bar,
            b_bar,
            sigma_a_diag: vec![T::one(); h],
            sigma_b_diag,
            hat_sigma_a: eye.clone(),
            hat_sigma_a_inv: eye.clone(),
            hat_sigma_b: eye.clone(),
            hat_sigma_b_inv: eye,
            ridge: DenseMatrix::zeros(h, m)?,
            omega: DenseMatrix::zeros(h, m)?,
            k: T::of(cfg.initial_k()),
            z_b: T::infinity(),
            iter: 0,
            a_prev: None,
            jitter_a: 0.0,
            jitter_b: 0.0,
            clamped_variances: 0,
            min_unclamped_variance: f64::INFINITY,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a_bar.rows(), self.b_bar.cols(), self.a_bar.cols())
    }

    pub fn is_finite(&self) -> bool {
        self.a_bar.is_finite()
            && self.b_bar.is_finite()
            && self.sigma_a_diag.iter().all(|x| x.is_finite())
            && self.sigma_b_diag.is_finite()
            && self.hat_sigma_a.matrix().is_finite()
            && self.hat_sigma_b.matrix().is_finite()
            && self.omega.is_finite()
            && self.k.is_finite()
            && self.z_b.is_finite()
    }
}

/// Metrics attached to a trace record; all optional.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub rmse_a: Option<f64>,
    pub rmse_b: Option<f64>,
    pub rmse_v: Option<f64>,
    pub sparsity_b: Option<f64>,
}

/// Called on every recorded iteration.
pub trait MetricHook<T> {
    fn measure(&mut self, state: &FactorState<T>) -> TraceMetrics;
}

impl<T, F> MetricHook<T> for F
where
    F: FnMut(&FactorState<T>) -> TraceMetrics,
{
    fn measure(&mut self, state: &FactorState<T>) -> TraceMetrics {
        self(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: u64,
    pub k: f64,
    pub z_b: f64,
    #[serde(flatten)]
    pub metrics: TraceMetrics,
    /// Σ_B entries floored at zero in this iteration.
    pub clamped_variances: u64,
    pub min_unclamped_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    ZbBelowThreshold,
    /// `Z_B` turned negative or non-finite; the state is the last iteration before it.
    ZbNonfiniteOrNegative,
    MaxIters,
    /// An update failed or produced non-finite values; the state is the last good one.
    Diverged { detail: String },
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::ZbBelowThreshold => "zb_below_threshold",
            Termination::ZbNonfiniteOrNegative => "zb_nonfinite_or_negative",
            Termination::MaxIters => "max_iters",
            Termination::Diverged { .. } => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub termination: Termination,
    /// Σ_B entries floored at zero, summed over all iterations.
    pub total_clamped_variances: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub state: FactorState<T>,
    pub trace: RunTrace,
}

enum Step {
    Completed,
    ZbInvalid,
}

/// One pass in the fixed order hat-Σ_A, Σ_A, ā, hat-Σ_B, ω, k, Z_B, Σ_B, b̄.
fn iterate<T: Scalar>(state: &mut FactorState<T>, v: &DenseMatrix<T>, cfg: &SolverConfig) -> Result<Step> {
    update_a(state, v, cfg)?;
    update_hat_sigma_b(state)?;
    compute_omega(state, v, cfg)?;
    let s = zb_sum(state, cfg)?;
    state.k = update_k(state.k, s, cfg)?;
    state.z_b = compute_zb(state.k, s);
    if matches!(cfg.mode, Mode::Tuned) && !(state.z_b >= T::zero() && state.z_b.is_finite()) {
        return Ok(Step::ZbInvalid);
    }
    update_b(state, v, cfg)?;
    state.iter += 1;
    Ok(Step::Completed)
}

fn record<T: Scalar>(state: &FactorState<T>, hook: &mut Option<&mut dyn MetricHook<T>>) -> TraceRecord {
    TraceRecord {
        iter: state.iter,
        k: state.k.as_f64(),
        z_b: state.z_b.as_f64(),
        metrics: hook.as_mut().map(|h| h.measure(state)).unwrap_or_default(),
        clamped_variances: state.clamped_variances,
        min_unclamped_variance: state.min_unclamped_variance,
    }
}

/// Runs from a random initial state drawn with `cfg.init_seed`.
pub fn run<T: Scalar>(
    v: &DenseMatrix<T>,
    h: usize,
    cfg: &SolverConfig,
    hook: Option<&mut dyn MetricHook<T>>,
) -> Result<RunOutput<T>> {
    cfg.validate(h)?;
    let state = FactorState::init(cfg, v.rows(), v.cols(), h)?;
    run_from(state, v, cfg, hook)
}

/// Iterates from `state` until a termination condition holds.
///
/// Only configuration and dimension errors are returned as `Err`; numerical
/// breakdown ends the run with [`Termination::Diverged`] and the last good state.
pub fn run_from<T: Scalar>(
    mut state: FactorState<T>,
    v: &DenseMatrix<T>,
    cfg: &SolverConfig,
    mut hook: Option<&mut dyn MetricHook<T>>,
) -> Result<RunOutput<T>> {
    let (_, _, h) = state.dims();
    cfg.validate(h)?;
    if v.shape() != (state.a_bar.rows(), state.b_bar.cols()) {
        return Err(Error::DimensionMismatch {
            op: "run",
            expected: (state.a_bar.rows(), state.b_bar.cols()),
            found: v.shape(),
        });
    }
    if !v.is_finite() {
        return Err(Error::NonFinite { what: "observation matrix" });
    }
    let tuned = matches!(cfg.mode, Mode::Tuned);
    let threshold = T::of(cfg.zb_threshold);
    let mut records = Vec::new();
    let mut total_clamped = 0u64;

    let termination = loop {
        if tuned && !(state.z_b > threshold) {
            break Termination::ZbBelowThreshold;
        }
        if state.iter >= cfg.max_iters {
            break Termination::MaxIters;
        }
        let mut next = state.clone();
        match iterate(&mut next, v, cfg) {
            Ok(Step::Completed) if next.is_finite() => {}
            Ok(Step::Completed) => {
                break Termination::Diverged {
                    detail: format!("non-finite state at iteration {}", next.iter),
                }
            }
            Ok(Step::ZbInvalid) => break Termination::ZbNonfiniteOrNegative,
            Err(e) => break Termination::Diverged { detail: e.to_string() },
        }
        state = next;
        total_clamped += state.clamped_variances;
        if state.iter == 1 || state.iter.is_multiple_of(cfg.stride) {
            records.push(record(&state, &mut hook));
        }
    };
    if state.iter > 0 && records.last().map(|r| r.iter) != Some(state.iter) {
        records.push(record(&state, &mut hook));
    }

    Ok(RunOutput {
        state,
        trace: RunTrace {
            records,
            termination,
            total_clamped_variances: total_clamped,
        },
    })
}

#[cfg(test)]
mod tests;
