//! One function per update expression of the iteration.
//!
//! Each function reads the fields of [`FactorState`] it depends on and writes the
//! fields it produces, so the loop in [`super::run`] reads as the sequence
//! hat-Σ_A → Σ_A → ā → hat-Σ_B → ω → k → Z_B → Σ_B → b̄.

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, DenseMatrix, SpdMatrix};
use crate::scalar::Scalar;

use super::{FactorState, Mode, SolverConfig};

fn check_v<T: Scalar>(state: &FactorState<T>, v: &DenseMatrix<T>) -> Result<()> {
    let expected = (state.a_bar.rows(), state.b_bar.cols());
    if v.shape() != expected {
        return Err(Error::DimensionMismatch {
            op: "observation",
            expected,
            found: v.shape(),
        });
    }
    Ok(())
}

/// hat-Σ_A = diag(σ²/(C_A)_hh + Σ_m (Σ_B)_hm) + b̄·b̄ᵀ, then Σ_A = σ²·diag(hat-Σ_A⁻¹)
/// and ā = V·b̄ᵀ·hat-Σ_A⁻¹. The matrix carries no `l` index and is built once.
pub fn update_a<T: Scalar>(state: &mut FactorState<T>, v: &DenseMatrix<T>, cfg: &SolverConfig) -> Result<()> {
    check_v(state, v)?;
    let h = state.b_bar.rows();
    let m = state.b_bar.cols();
    let sigma2 = T::of(cfg.sigma * cfg.sigma);

    let mut hat = state.b_bar.matmul_transpose(&state.b_bar)?;
    for i in 0..h {
        let mut var_sum = T::zero();
        for j in 0..m {
            var_sum += state.sigma_b_diag[(i, j)];
        }
        hat[(i, i)] += sigma2 / T::of(cfg.c_a(i)) + var_sum;
    }
    let hat = SpdMatrix::symmetrized(hat)?;
    let inv = spd_inverse(&hat)?;
    state.jitter_a = inv.jitter.as_f64();
    let inv = inv.inverse;

    state.sigma_a_diag = (0..h).map(|i| sigma2 * inv[(i, i)]).collect();
    // Rows of V·b̄ᵀ times the symmetric inverse.
    let vb = v.matmul_transpose(&state.b_bar)?;
    let a_new = vb.matmul(inv.matrix())?;
    if cfg.ridge_uses_previous_a {
        state.a_prev = Some(std::mem::replace(&mut state.a_bar, a_new));
    } else {
        state.a_bar = a_new;
    }
    state.hat_sigma_a = hat;
    state.hat_sigma_a_inv = inv;
    Ok(())
}

/// hat-Σ_B = L·diag(Σ_A) + āᵀ·ā, shared across `m`, and its inverse.
pub fn update_hat_sigma_b<T: Scalar>(state: &mut FactorState<T>) -> Result<&SpdMatrix<T>> {
    let l = T::of(state.a_bar.rows() as f64);
    let mut hat = state.a_bar.transpose_matmul(&state.a_bar)?;
    for (i, &s) in state.sigma_a_diag.iter().enumerate() {
        hat[(i, i)] += l * s;
    }
    let hat = SpdMatrix::symmetrized(hat)?;
    let inv = spd_inverse(&hat)?;
    state.jitter_b = inv.jitter.as_f64();
    state.hat_sigma_b = hat;
    state.hat_sigma_b_inv = inv.inverse;
    Ok(&state.hat_sigma_b)
}

/// Ridge term `U = hat-Σ_B⁻¹·āᵀ·V` and `ω_hm = U_hm / √(2σ²(hat-Σ_B⁻¹)_hh)`.
pub fn compute_omega<'s, T: Scalar>(
    state: &'s mut FactorState<T>,
    v: &DenseMatrix<T>,
    cfg: &SolverConfig,
) -> Result<&'s DenseMatrix<T>> {
    check_v(state, v)?;
    let sigma2 = T::of(cfg.sigma * cfg.sigma);
    let inv = state.hat_sigma_b_inv.matrix();
    let h = inv.rows();
    for i in 0..h {
        let d = inv[(i, i)];
        if !(d > T::zero()) {
            return Err(Error::NonPositiveInverseDiagonal {
                index: i,
                value: d.as_f64(),
            });
        }
    }
    let atv = state.a_bar.transpose_matmul(v)?;
    let ridge = inv.matmul(&atv)?;
    let mut omega = ridge.clone();
    for i in 0..h {
        let scale = T::one() / (T::of(2.0) * sigma2 * inv[(i, i)]).sqrt();
        for x in omega.row_mut(i) {
            *x *= scale;
        }
    }
    state.ridge = ridge;
    state.omega = omega;
    Ok(&state.omega)
}

/// `S = Σ_{h,m} { √(2σ²(hat-Σ_B⁻¹)_hh/π)·e^{−ω²} + U_hm·erf(ω_hm) }`.
///
/// `Z_B = 1 − S/k`, and `k = S` is its zero point.
pub fn zb_sum<T: Scalar>(state: &FactorState<T>, cfg: &SolverConfig) -> Result<T> {
    let sigma2 = T::of(cfg.sigma * cfg.sigma);
    let pi = T::of(std::f64::consts::PI);
    let inv = state.hat_sigma_b_inv.matrix();
    let mut s = T::zero();
    for i in 0..state.omega.rows() {
        let width = (T::of(2.0) * sigma2 * inv[(i, i)] / pi).sqrt();
        for (&w, &u) in state.omega.row(i).iter().zip(state.ridge.row(i)) {
            s += width * (-w * w).exp() + u * cfg.erf.apply(w);
        }
    }
    if !s.is_finite() {
        return Err(Error::NonFinite { what: "Z_B sum" });
    }
    Ok(s)
}

/// Partial step `k ← (1−ε)·k + ε·S`; returns the configured constant in fixed-k mode.
pub fn update_k<T: Scalar>(k: T, s: T, cfg: &SolverConfig) -> Result<T> {
    let next = match cfg.mode {
        Mode::Tuned => {
            let eps = T::of(cfg.epsilon);
            (T::one() - eps) * k + eps * s
        }
        Mode::FixedK { k } => T::of(k),
    };
    if !(next > T::zero()) || !next.is_finite() {
        return Err(Error::NonPositiveK(next.as_f64()));
    }
    Ok(next)
}

/// `Z_B = 1 − S/k`. Negative values are returned as-is.
#[inline]
pub fn compute_zb<T: Scalar>(k: T, s: T) -> T {
    T::one() - s / k
}

/// Mean and variance of B with the Laplace corrections carrying `1/(k·Z_B)`.
///
/// Negative variances are floored at zero; the number of floored entries and the
/// smallest unfloored value are kept on the state.
pub fn update_b<T: Scalar>(state: &mut FactorState<T>, v: &DenseMatrix<T>, cfg: &SolverConfig) -> Result<()> {
    check_v(state, v)?;
    let denom = state.k * state.z_b;
    if !(denom.abs() >= T::of(1e-300)) {
        return Err(Error::ZeroDenominator(denom.as_f64()));
    }
    let sigma2 = T::of(cfg.sigma * cfg.sigma);
    let pi = T::of(std::f64::consts::PI);
    let inv = state.hat_sigma_b_inv.matrix();
    let (h, m) = state.omega.shape();

    // c[h'][h] = σ²(hat-Σ_B⁻¹)_{h'h} / (k Z_B)
    let c = inv.map(|x| sigma2 * x / denom);
    // q[h'][h] = √(2/(πσ²d_h')) · (σ²(hat-Σ_B⁻¹)_{h'h})² / (k Z_B)
    let q = DenseMatrix::from_fn(h, h, |hp, hh| {
        let sv = sigma2 * inv[(hp, hh)];
        (T::of(2.0) / (pi * sigma2 * inv[(hp, hp)])).sqrt() * sv * sv / denom
    })?;
    let erf_omega = state.omega.map(|w| cfg.erf.apply(w));
    let gauss_omega = state.omega.map(|w| (-w * w).exp());
    let corr = c.transpose_matmul(&erf_omega)?;
    let var_corr = q.transpose_matmul(&gauss_omega)?;

    let stale_ridge;
    let ridge = match (&state.a_prev, cfg.ridge_uses_previous_a) {
        (Some(prev), true) => {
            stale_ridge = inv.matmul(&prev.transpose_matmul(v)?)?;
            &stale_ridge
        }
        _ => &state.ridge,
    };

    let mut b_bar = DenseMatrix::zeros(h, m)?;
    let mut sigma_b = DenseMatrix::zeros(h, m)?;
    let mut clamped = 0u64;
    let mut min_var = f64::INFINITY;
    for i in 0..h {
        let base = sigma2 * inv[(i, i)];
        for j in 0..m {
            let shift = corr[(i, j)];
            b_bar[(i, j)] = ridge[(i, j)] - shift;
            let var = base - var_corr[(i, j)] - shift * shift;
            min_var = min_var.min(var.as_f64());
            sigma_b[(i, j)] = if var < T::zero() {
                clamped += 1;
                T::zero()
            } else {
                var
            };
        }
    }
    state.b_bar = b_bar;
    state.sigma_b_diag = sigma_b;
    state.clamped_variances = clamped;
    state.min_unclamped_variance = min_var;
    Ok(())
}
