use super::*;
use crate::linalg::{erf_paper, DenseMatrix};
use crate::synth::{observe, sample_ground_truth, Noise};

fn cfg(sigma: f64) -> SolverConfig {
    SolverConfig {
        sigma,
        ..Default::default()
    }
}

fn state_with(a: DenseMatrix<f64>, b: DenseMatrix<f64>, c: &SolverConfig) -> FactorState<f64> {
    let (h, m) = b.shape();
    FactorState::from_factors(a, b, DenseMatrix::filled(h, m, 1.0).unwrap(), c).unwrap()
}

fn small_problem(seed: u64) -> (DenseMatrix<f64>, FactorState<f64>, SolverConfig) {
    let gt = sample_ground_truth::<f64>(6, 7, 3, 0.5, Noise::Gaussian { sigma: 0.1 }, seed).unwrap();
    let v = observe(&gt).unwrap().into_matrix();
    let c = SolverConfig {
        sigma: 0.1,
        init_seed: seed,
        ..Default::default()
    };
    let s = FactorState::init(&c, 6, 7, 3).unwrap();
    (v, s, c)
}

#[test]
fn init_is_deterministic() {
    let c = cfg(0.1);
    let a = FactorState::<f64>::init(&c, 5, 6, 3).unwrap();
    let b = FactorState::<f64>::init(&c, 5, 6, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.sigma_b_diag, DenseMatrix::filled(3, 6, 1.0).unwrap());
    assert_eq!(a.k, c.k0);
    assert!(a.z_b > 1e300);
    assert_eq!(a.iter, 0);
}

#[test]
fn update_a_with_vanishing_means() {
    let c = cfg(0.3);
    let (l, m, h) = (4, 5, 2);
    let v = DenseMatrix::from_fn(l, m, |r, k| (r + 2 * k) as f64).unwrap();
    let mut s = state_with(DenseMatrix::filled(l, h, 1.0).unwrap(), DenseMatrix::zeros(h, m).unwrap(), &c);
    update_a(&mut s, &v, &c).unwrap();
    let expected = DenseMatrix::from_diag(&[0.09 + m as f64; 2]).unwrap();
    assert!(s.hat_sigma_a.matrix().max_abs_diff(&expected).unwrap() < 1e-12);
    assert!(s.a_bar.max_abs() == 0.0);
    for &sa in &s.sigma_a_diag {
        assert!((sa - 0.09 / (0.09 + m as f64)).abs() < 1e-15);
    }
}

#[test]
fn update_a_scalar_reduction() {
    let c = cfg(0.2);
    let v = DenseMatrix::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.5]).unwrap();
    let b = DenseMatrix::from_vec(1, 3, vec![0.7, -0.1, 2.0]).unwrap();
    let mut s = state_with(DenseMatrix::filled(2, 1, 1.0).unwrap(), b.clone(), &c);
    s.sigma_b_diag = DenseMatrix::from_vec(1, 3, vec![0.3, 0.2, 0.1]).unwrap();
    update_a(&mut s, &v, &c).unwrap();
    let denom = 0.04 + (0.3 + 0.49) + (0.2 + 0.01) + (0.1 + 4.0);
    for l in 0..2 {
        let num: f64 = (0..3).map(|m| v[(l, m)] * b[(0, m)]).sum();
        assert!((s.a_bar[(l, 0)] - num / denom).abs() < 1e-14);
    }
}

#[test]
fn update_a_respects_prior_covariance() {
    let mut c = cfg(0.5);
    c.c_a_diag = Some(vec![2.0, 0.5]);
    let mut s = state_with(DenseMatrix::filled(3, 2, 1.0).unwrap(), DenseMatrix::zeros(2, 4).unwrap(), &c);
    let v = DenseMatrix::zeros(3, 4).unwrap();
    update_a(&mut s, &v, &c).unwrap();
    assert!((s.hat_sigma_a[(0, 0)] - (0.125 + 4.0)).abs() < 1e-14);
    assert!((s.hat_sigma_a[(1, 1)] - (0.5 + 4.0)).abs() < 1e-14);
}

#[test]
fn hat_sigma_b_with_zero_means() {
    let c = cfg(0.1);
    let mut s = state_with(DenseMatrix::zeros(5, 3).unwrap(), DenseMatrix::filled(3, 2, 1.0).unwrap(), &c);
    s.sigma_a_diag = vec![1.0; 3];
    update_hat_sigma_b(&mut s).unwrap();
    let expected = DenseMatrix::from_diag(&[5.0; 3]).unwrap();
    assert_eq!(s.hat_sigma_b.matrix(), &expected);
}

#[test]
fn hat_sigma_b_scalar_reduction() {
    let c = cfg(0.1);
    let a = DenseMatrix::from_vec(3, 1, vec![1.0, -2.0, 0.5]).unwrap();
    let mut s = state_with(a, DenseMatrix::filled(1, 2, 1.0).unwrap(), &c);
    s.sigma_a_diag = vec![0.25];
    update_hat_sigma_b(&mut s).unwrap();
    assert!((s.hat_sigma_b[(0, 0)] - (3.0 * 0.25 + 1.0 + 4.0 + 0.25)).abs() < 1e-14);
    assert!((s.hat_sigma_b_inv[(0, 0)] - 1.0 / 6.0).abs() < 1e-14);
}

#[test]
fn omega_vanishes_for_zero_observation() {
    let (_, mut s, c) = small_problem(1);
    let v = DenseMatrix::zeros(6, 7).unwrap();
    update_a(&mut s, &v, &c).unwrap();
    s.a_bar = DenseMatrix::filled(6, 3, 0.3).unwrap();
    s.a_bar[(0, 1)] = -0.2;
    update_hat_sigma_b(&mut s).unwrap();
    let om = compute_omega(&mut s, &v, &c).unwrap();
    assert_eq!(om.max_abs(), 0.0);
}

#[test]
fn omega_scalar_reduction() {
    let c = cfg(0.3);
    let a = DenseMatrix::from_vec(2, 1, vec![1.5, -0.5]).unwrap();
    let v = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, -1.0, 0.5]).unwrap();
    let mut s = state_with(a.clone(), DenseMatrix::filled(1, 2, 1.0).unwrap(), &c);
    s.sigma_a_diag = vec![0.1];
    update_hat_sigma_b(&mut s).unwrap();
    let hat = 2.0 * 0.1 + 2.25 + 0.25;
    compute_omega(&mut s, &v, &c).unwrap();
    for m in 0..2 {
        let num = (v[(0, m)] * a[(0, 0)] + v[(1, m)] * a[(1, 0)]) / hat;
        let expected = num / (2.0 * 0.09 / hat).sqrt();
        assert!((s.omega[(0, m)] - expected).abs() < 1e-13);
    }
}

#[test]
fn omega_rejects_broken_inverse() {
    let (v, mut s, c) = small_problem(2);
    let mut bad = DenseMatrix::identity(3).unwrap();
    bad[(1, 1)] = -1.0;
    s.hat_sigma_b_inv = SpdMatrix::new(bad).unwrap();
    assert!(matches!(
        compute_omega(&mut s, &v, &c),
        Err(Error::NonPositiveInverseDiagonal { index: 1, .. })
    ));
}

#[test]
fn zb_sum_at_zero_observation() {
    let (_, mut s, c) = small_problem(3);
    let v = DenseMatrix::zeros(6, 7).unwrap();
    update_hat_sigma_b(&mut s).unwrap();
    compute_omega(&mut s, &v, &c).unwrap();
    let inv = s.hat_sigma_b_inv.clone();
    let expected: f64 = (0..3)
        .map(|h| 7.0 * (2.0 * 0.01 * inv[(h, h)] / std::f64::consts::PI).sqrt())
        .sum();
    for conv in [ErfConvention::Standard, ErfConvention::Complementary] {
        let c2 = SolverConfig { erf: conv, ..c.clone() };
        assert!((zb_sum(&s, &c2).unwrap() - expected).abs() < 1e-13);
    }
}

#[test]
fn zero_point_consistency() {
    let (v, mut s, c) = small_problem(4);
    update_a(&mut s, &v, &c).unwrap();
    update_hat_sigma_b(&mut s).unwrap();
    compute_omega(&mut s, &v, &c).unwrap();
    let big_s = zb_sum(&s, &c).unwrap();
    assert_eq!(compute_zb(big_s, big_s), 0.0);
}

#[test]
fn compute_zb_arithmetic() {
    assert_eq!(compute_zb(3.0_f64, 0.0), 1.0);
    assert_eq!(compute_zb(2.5_f64, 2.5), 0.0);
    assert_eq!(compute_zb(2.0_f64, 4.0), -1.0);
}

#[test]
fn update_k_steps() {
    let mut c = cfg(0.1);
    c.epsilon = 0.0;
    assert_eq!(update_k(10.0, 4.0, &c).unwrap(), 10.0);
    c.epsilon = 1.0;
    assert_eq!(update_k(10.0, 4.0, &c).unwrap(), 4.0);
    c.epsilon = 0.1;
    assert!((update_k(10.0_f64, 4.0, &c).unwrap() - 9.4).abs() < 1e-14);
    c.mode = Mode::FixedK { k: 7.0 };
    assert_eq!(update_k(10.0, 4.0, &c).unwrap(), 7.0);
    c.mode = Mode::Tuned;
    c.epsilon = 1.0;
    assert_eq!(update_k(10.0, -1.0, &c).unwrap_err(), Error::NonPositiveK(-1.0));
}

#[test]
fn update_k_contracts_toward_fixed_target() {
    let c = SolverConfig {
        epsilon: 0.25,
        ..cfg(0.1)
    };
    let target = 3.0;
    let mut k = 50.0_f64;
    for _ in 0..40 {
        let next = update_k(k, target, &c).unwrap();
        assert!(((next - target).abs() - 0.75 * (k - target).abs()).abs() < 1e-12);
        k = next;
    }
}

fn scalar_b_state(conv: ErfConvention, k: f64) -> (FactorState<f64>, SolverConfig, DenseMatrix<f64>) {
    let c = SolverConfig {
        sigma: 0.1,
        erf: conv,
        ..Default::default()
    };
    let mut s = state_with(DenseMatrix::filled(1, 1, 1.0).unwrap(), DenseMatrix::filled(1, 1, 0.0).unwrap(), &c);
    s.hat_sigma_b_inv = SpdMatrix::new(DenseMatrix::filled(1, 1, 0.5).unwrap()).unwrap();
    s.ridge = DenseMatrix::filled(1, 1, 1.0).unwrap();
    s.omega = DenseMatrix::zeros(1, 1).unwrap();
    s.k = k;
    s.z_b = 0.5;
    (s, c, DenseMatrix::zeros(1, 1).unwrap())
}

#[test]
fn update_b_hand_substitution() {
    // σ²·0.5/(k Z_B) = 0.01·0.5/1 = 0.005, times erf(0)
    let (mut s, c, v) = scalar_b_state(ErfConvention::Complementary, 2.0);
    update_b(&mut s, &v, &c).unwrap();
    assert!((s.b_bar[(0, 0)] - 0.995).abs() < 1e-15);
    assert!((erf_paper(0.0_f64) - 1.0).abs() < 1e-15);

    let (mut s, c, v) = scalar_b_state(ErfConvention::Standard, 2.0);
    update_b(&mut s, &v, &c).unwrap();
    assert_eq!(s.b_bar[(0, 0)], 1.0);
    // variance: σ²d − √(2/(πσ²d))·(σ²d)²/(kZ) at ω = 0
    let sd = 0.005;
    let expected = sd - (2.0 / (std::f64::consts::PI * sd)).sqrt() * sd * sd / 1.0;
    assert!((s.sigma_b_diag[(0, 0)] - expected).abs() < 1e-15);
}

#[test]
fn update_b_rejects_zero_denominator() {
    let (mut s, c, v) = scalar_b_state(ErfConvention::Standard, 2.0);
    s.z_b = 0.0;
    assert!(matches!(update_b(&mut s, &v, &c), Err(Error::ZeroDenominator(_))));
}

#[test]
fn laplace_corrections_vanish_for_huge_k() {
    let (v, mut s, mut c) = small_problem(5);
    c.mode = Mode::FixedK { k: 1e300 };
    s.k = 1e300;
    update_a(&mut s, &v, &c).unwrap();
    update_hat_sigma_b(&mut s).unwrap();
    compute_omega(&mut s, &v, &c).unwrap();
    let big_s = zb_sum(&s, &c).unwrap();
    s.z_b = compute_zb(s.k, big_s);
    update_b(&mut s, &v, &c).unwrap();
    for h in 0..3 {
        let base = 0.01 * s.hat_sigma_b_inv[(h, h)];
        for m in 0..7 {
            let rel = (s.b_bar[(h, m)] - s.ridge[(h, m)]).abs() / s.ridge[(h, m)].abs().max(1e-300);
            assert!(rel <= 1e-12);
            assert!((s.sigma_b_diag[(h, m)] - base).abs() <= 1e-12 * base);
        }
    }
}

#[test]
fn threshold_above_first_zb_stops_after_one_iteration() {
    let (v, _, mut c) = small_problem(6);
    c.zb_threshold = 2.0;
    let out = run(&v, 3, &c, None).unwrap();
    assert_eq!(out.trace.termination, Termination::ZbBelowThreshold);
    assert_eq!(out.state.iter, 1);
    assert_eq!(out.trace.records.len(), 1);
}

#[test]
fn small_k0_stops_on_negative_zb_with_previous_state() {
    let (v, _, mut c) = small_problem(7);
    c.k0 = 1e-3;
    let s0 = FactorState::init(&c, 6, 7, 3).unwrap();
    let out = run(&v, 3, &c, None).unwrap();
    assert_eq!(out.trace.termination, Termination::ZbNonfiniteOrNegative);
    assert_eq!(out.state, s0);
    assert!(out.trace.records.is_empty());
}

#[test]
fn complementary_convention_drives_k_negative() {
    let gt = sample_ground_truth::<f64>(30, 30, 3, 0.5, Noise::Gaussian { sigma: 0.05 }, 8).unwrap();
    let v = observe(&gt).unwrap().into_matrix();
    let c = SolverConfig {
        erf: ErfConvention::Complementary,
        max_iters: 10_000,
        ..Default::default()
    };
    let out = run(&v, 3, &c, None).unwrap();
    assert!(matches!(out.trace.termination, Termination::Diverged { .. }));
    assert!(out.state.is_finite());
}

#[test]
fn fixed_k_runs_to_cap_and_records_stride() {
    let (v, _, mut c) = small_problem(9);
    c.mode = Mode::FixedK { k: 0.5 };
    c.max_iters = 25;
    c.stride = 10;
    let out = run(&v, 3, &c, None).unwrap();
    assert_eq!(out.trace.termination, Termination::MaxIters);
    let iters: Vec<u64> = out.trace.records.iter().map(|r| r.iter).collect();
    assert_eq!(iters, vec![1, 10, 20, 25]);
    assert!(out.trace.records.iter().all(|r| r.k == 0.5));
}

#[test]
fn run_is_reproducible() {
    let (v, _, mut c) = small_problem(10);
    c.max_iters = 200;
    let a = run(&v, 3, &c, None).unwrap();
    let b = run(&v, 3, &c, None).unwrap();
    assert_eq!(a.state, b.state);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn hook_sees_recorded_iterations() {
    let (v, _, mut c) = small_problem(11);
    c.max_iters = 5;
    c.mode = Mode::FixedK { k: 1e6 };
    let mut seen = Vec::new();
    let mut hook = |s: &FactorState<f64>| {
        seen.push(s.iter);
        TraceMetrics {
            rmse_v: Some(s.iter as f64),
            ..Default::default()
        }
    };
    let out = run(&v, 3, &c, Some(&mut hook)).unwrap();
    assert_eq!(seen, vec![1, 2, 3, 4, 5]);
    assert_eq!(out.trace.records[2].metrics.rmse_v, Some(3.0));
    assert_eq!(out.trace.records[2].metrics.rmse_a, None);
}

#[test]
fn invalid_configs_rejected() {
    let (v, _, c) = small_problem(12);
    for bad in [
        SolverConfig { sigma: 0.0, ..c.clone() },
        SolverConfig { epsilon: 0.0, ..c.clone() },
        SolverConfig { epsilon: 1.5, ..c.clone() },
        SolverConfig { zb_threshold: 0.0, ..c.clone() },
        SolverConfig { stride: 0, ..c.clone() },
        SolverConfig { c_a_diag: Some(vec![1.0]), ..c.clone() },
        SolverConfig { mode: Mode::FixedK { k: -1.0 }, ..c.clone() },
    ] {
        assert!(matches!(run(&v, 3, &bad, None), Err(Error::InvalidConfig(_))));
    }
    let wrong = DenseMatrix::<f64>::zeros(5, 7).unwrap();
    let s = FactorState::init(&c, 6, 7, 3).unwrap();
    assert!(matches!(run_from(s, &wrong, &c, None), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn f32_run_completes() {
    let gt = sample_ground_truth::<f32>(20, 20, 2, 0.5, Noise::Gaussian { sigma: 0.1 }, 13).unwrap();
    let v = observe(&gt).unwrap().into_matrix();
    let c = SolverConfig {
        sigma: 0.1,
        max_iters: 50,
        mode: Mode::FixedK { k: 1e6 },
        ..Default::default()
    };
    let out = run(&v, 2, &c, None).unwrap();
    assert_eq!(out.trace.termination, Termination::MaxIters);
    let rmse = crate::metrics::rmse_v(&v, &out.state.a_bar, &out.state.b_bar).unwrap();
    assert!(rmse < 0.2, "{rmse}");
}
