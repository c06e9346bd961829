//! One seeded random instance pushed through every update step, each compared
//! against the oracle.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sparsemf::solver::{compute_omega, compute_zb, update_a, update_b, update_hat_sigma_b, zb_sum};
use sparsemf::{DenseMatrix, ErfConvention, FactorState, SolverConfig};
use super::oracle::{self, Mat};

pub const TOL: f64 = 1e-10;

fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    (0..r).map(|_| (0..c).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

fn from_mat(m: &Mat) -> DenseMatrix<f64> {
    DenseMatrix::from_rows(m).unwrap()
}

fn check(what: &str, seed: u64, got: &[f64], want: &[f64]) {
    let err = oracle::max_rel_err(got, want);
    assert!(err <= TOL, "{what} seed {seed}: rel err {err:e}");
}

pub fn run_instance(seed: u64, conv: ErfConvention) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = rng.random_range(1..=8);
    let m = rng.random_range(1..=8);
    let h = rng.random_range(1..=4);
    let sigma = rng.random_range(0.05..1.0);
    let c_a: Vec<f64> = (0..h).map(|_| rng.random_range(0.5..2.0)).collect();
    let v = gauss(&mut rng, l, m);
    let a0 = gauss(&mut rng, l, h);
    let b0 = gauss(&mut rng, h, m);
    let sb0: Mat = (0..h).map(|_| (0..m).map(|_| rng.random_range(0.1..1.0)).collect()).collect();
    let erf: fn(f64) -> f64 = match conv {
        ErfConvention::Standard => libm::erf,
        ErfConvention::Complementary => libm::erfc,
    };

    let cfg = SolverConfig {
        sigma,
        c_a_diag: Some(c_a.clone()),
        erf: conv,
        ..Default::default()
    };
    let vm = from_mat(&v);
    let mut st = FactorState::from_factors(from_mat(&a0), from_mat(&b0), from_mat(&sb0), &cfg).unwrap();

    let oa = oracle::update_a(&v, &b0, &sb0, sigma, &c_a);
    update_a(&mut st, &vm, &cfg).unwrap();
    for l_i in 0..l {
        assert_eq!(oa.hat[l_i], oa.hat[0], "per-row hat-Σ_A differ");
        assert_eq!(oa.sigma_a[l_i], oa.sigma_a[0]);
    }
    check("hat Σ_A", seed, st.hat_sigma_a.matrix().as_slice(), &oracle::flat(&oa.hat[0]));
    check("Σ_A", seed, &st.sigma_a_diag, &oa.sigma_a[0]);
    check("ā", seed, st.a_bar.as_slice(), &oracle::flat(&oa.a_bar));

    let hats = oracle::hat_sigma_b(&oa.a_bar, &oa.sigma_a, m);
    update_hat_sigma_b(&mut st).unwrap();
    for hm in &hats {
        assert_eq!(hm, &hats[0], "per-column hat-Σ_B differ");
    }
    check("hat Σ_B", seed, st.hat_sigma_b.matrix().as_slice(), &oracle::flat(&hats[0]));
    let invs: Vec<Mat> = hats.iter().map(oracle::gauss_jordan).collect();
    check("hat Σ_B inverse", seed, st.hat_sigma_b_inv.matrix().as_slice(), &oracle::flat(&invs[0]));

    let om = oracle::omega(&v, &oa.a_bar, &invs, sigma);
    compute_omega(&mut st, &vm, &cfg).unwrap();
    check("ω", seed, st.omega.as_slice(), &oracle::flat(&om));

    let s_or = oracle::zb_sum(&v, &oa.a_bar, &invs, &om, sigma, erf);
    let s_cr = zb_sum(&st, &cfg).unwrap();
    check("S", seed, &[s_cr], &[s_or]);

    // Pick k so that Z_B sits away from zero and the Laplace corrections matter.
    let k = 2.0 * s_or.abs().max(1e-3) * rng.random_range(0.6..1.5);
    let z_or = 1.0 - s_or / k;
    st.k = k;
    st.z_b = compute_zb(k, s_cr);
    check("Z_B", seed, &[st.z_b], &[z_or]);

    let (b_or, var_or) = oracle::update_b(&v, &oa.a_bar, &invs, &om, k, z_or, sigma, erf);
    update_b(&mut st, &vm, &cfg).unwrap();
    check("b̄", seed, st.b_bar.as_slice(), &oracle::flat(&b_or));
    let clamped: Vec<f64> = oracle::flat(&var_or).iter().map(|x| x.max(0.0)).collect();
    check("Σ_B", seed, st.sigma_b_diag.as_slice(), &clamped);
}

