//! Ground-truth factors and noisy observations for synthetic experiments.
//!
//! `A*` has i.i.d. standard Gaussian entries. Each entry of `B*` is exactly zero
//! with probability `rho` and standard Gaussian otherwise, so `rho` is the
//! expected zero-fraction of `B*` (the sparsity level).

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

const FACTOR_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

/// Additive observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    Gaussian { sigma: f64 },
    /// `V = A*·B*` exactly.
    None,
}

impl Noise {
    pub fn sigma(&self) -> f64 {
        match *self {
            Noise::Gaussian { sigma } => sigma,
            Noise::None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T> {
    pub a_star: DenseMatrix<T>,
    pub b_star: DenseMatrix<T>,
    pub rho: f64,
    pub noise: Noise,
    pub seed: u64,
}

impl<T: Scalar> GroundTruth<T> {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a_star.rows(), self.b_star.cols(), self.a_star.cols())
    }

    pub fn zero_fraction(&self) -> f64 {
        zero_fraction(&self.b_star)
    }

    /// Noise-free product `A*·B*`.
    pub fn product(&self) -> DenseMatrix<T> {
        self.a_star
            .matmul(&self.b_star)
            .expect("ground-truth factors have matching inner dimension")
    }
}

/// Where an observation matrix came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { seed: u64, rho: f64, noise: Noise },
    Image { path: PathBuf },
    External,
}

/// The observed `L×M` matrix `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix<T> {
    v: DenseMatrix<T>,
    provenance: Provenance,
}

impl<T: Scalar> ObservationMatrix<T> {
    pub fn new(v: DenseMatrix<T>, provenance: Provenance) -> Result<Self> {
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "observation matrix" });
        }
        Ok(Self { v, provenance })
    }

    #[inline]
    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.v
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn into_matrix(self) -> DenseMatrix<T> {
        self.v
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Matrix of i.i.d. `N(0, 1)` entries drawn in row-major order.
pub(crate) fn gaussian_matrix<T: Scalar>(rows: usize, cols: usize, rng: &mut impl Rng) -> Result<DenseMatrix<T>> {
    DenseMatrix::from_fn(rows, cols, |_, _| T::of(rng.sample::<f64, _>(StandardNormal)))
}

/// Draws `A*` (`l×h`, Gaussian) and `B*` (`h×m`, Bernoulli-Gaussian with zero
/// probability `rho`) from the factor stream of `seed`.
pub fn sample_ground_truth<T: Scalar>(
    l: usize,
    m: usize,
    h: usize,
    rho: f64,
    noise: Noise,
    seed: u64,
) -> Result<GroundTruth<T>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidRho(rho));
    }
    if let Noise::Gaussian { sigma } = noise {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise sigma must be positive, got {sigma}")));
        }
    }
    let mut rng = stream_rng(seed, FACTOR_STREAM);
    let a_star = gaussian_matrix(l, h, &mut rng)?;
    let b_star = DenseMatrix::from_fn(h, m, |_, _| {
        let u: f64 = rng.random();
        let g: f64 = rng.sample(StandardNormal);
        if u < rho {
            T::zero()
        } else {
            T::of(g)
        }
    })?;
    Ok(GroundTruth {
        a_star,
        b_star,
        rho,
        noise,
        seed,
    })
}

/// `V = A*·B* + E`, with `E` drawn from the noise stream of the ground truth's seed.
pub fn observe<T: Scalar>(gt: &GroundTruth<T>) -> Result<ObservationMatrix<T>> {
    let mut v = gt.product();
    if let Noise::Gaussian { sigma } = gt.noise {
        let mut rng = stream_rng(gt.seed, NOISE_STREAM);
        for x in v.as_mut_slice() {
            *x += T::of(sigma * rng.sample::<f64, _>(StandardNormal));
        }
    }
    ObservationMatrix::new(
        v,
        Provenance::Synthetic {
            seed: gt.seed,
            rho: gt.rho,
            noise: gt.noise,
        },
    )
}

/// Fraction of entries that are exactly zero.
pub fn zero_fraction<T: Scalar>(m: &DenseMatrix<T>) -> f64 {
    let zeros = m.as_slice().iter().filter(|x| **x == T::zero()).count();
    zeros as f64 / m.as_slice().len() as f64
}
