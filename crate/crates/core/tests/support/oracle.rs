//! Literal index-loop transcriptions of the update expressions.
//!
//! Nothing here touches the crate's matrix kernels: matrices are `Vec<Vec<f64>>`,
//! every sum is an explicit loop over the indices it runs over, per-`l` and per-`m`
//! matrices are built separately, and inverses use Gauss-Jordan elimination.

#![allow(clippy::needless_range_loop)]

#![allow(dead_code)]

use std::f64::consts::PI;

pub type Mat = Vec<Vec<f64>>;

pub fn gauss_jordan(m: &Mat) -> Mat {
    let n = m.len();
    let mut aug: Mat = (0..n)
        .map(|i| {
            let mut row = m[i].clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if aug[r][col].abs() > aug[piv][col].abs() {
                piv = r;
            }
        }
        aug.swap(col, piv);
        let p = aug[col][col];
        for c in 0..2 * n {
            aug[col][c] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                for c in 0..2 * n {
                    aug[r][c] -= f * aug[col][c];
                }
            }
        }
    }
    aug.into_iter().map(|row| row[n..].to_vec()).collect()
}

fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

pub struct AUpdate {
    /// hat-Σ_A for every l.
    pub hat: Vec<Mat>,
    /// (Σ_A l)_hh for every l.
    pub sigma_a: Vec<Vec<f64>>,
    pub a_bar: Mat,
}

/// hat-Σ_A l, Σ_A l and ā built independently for every row l.
pub fn update_a(v: &Mat, b_bar: &Mat, sigma_b: &Mat, sigma: f64, c_a: &[f64]) -> AUpdate {
    let l_dim = v.len();
    let m_dim = v[0].len();
    let h_dim = b_bar.len();
    let s2 = sigma * sigma;
    let mut hats = Vec::new();
    let mut sig = Vec::new();
    let mut a_bar = vec![vec![0.0; h_dim]; l_dim];
    for l in 0..l_dim {
        let mut hat = vec![vec![0.0; h_dim]; h_dim];
        for h in 0..h_dim {
            for hp in 0..h_dim {
                let mut acc = s2 / c_a[h] * delta(h, hp);
                for m in 0..m_dim {
                    acc += sigma_b[h][m] * delta(h, hp) + b_bar[h][m] * b_bar[hp][m];
                }
                hat[h][hp] = acc;
            }
        }
        let inv = gauss_jordan(&hat);
        sig.push((0..h_dim).map(|h| s2 * inv[h][h]).collect());
        for h in 0..h_dim {
            let mut acc = 0.0;
            for m in 0..m_dim {
                for hp in 0..h_dim {
                    acc += inv[h][hp] * v[l][m] * b_bar[hp][m];
                }
            }
            a_bar[l][h] = acc;
        }
        hats.push(hat);
    }
    AUpdate {
        hat: hats,
        sigma_a: sig,
        a_bar,
    }
}

/// hat-Σ_B m for every m.
pub fn hat_sigma_b(a_bar: &Mat, sigma_a: &[Vec<f64>], m_dim: usize) -> Vec<Mat> {
    let l_dim = a_bar.len();
    let h_dim = a_bar[0].len();
    (0..m_dim)
        .map(|_| {
            let mut hat = vec![vec![0.0; h_dim]; h_dim];
            for h in 0..h_dim {
                for hp in 0..h_dim {
                    let mut acc = 0.0;
                    for l in 0..l_dim {
                        acc += sigma_a[l][h] * delta(h, hp) + a_bar[l][h] * a_bar[l][hp];
                    }
                    hat[h][hp] = acc;
                }
            }
            hat
        })
        .collect()
}

/// Σ_{h',l} (hat-Σ_B m⁻¹)_{hh'} v_lm ā_lh'
pub fn ridge_term(v: &Mat, a_bar: &Mat, hat_b_inv: &[Mat], h: usize, m: usize) -> f64 {
    let mut acc = 0.0;
    for hp in 0..a_bar[0].len() {
        for l in 0..v.len() {
            acc += hat_b_inv[m][h][hp] * v[l][m] * a_bar[l][hp];
        }
    }
    acc
}

pub fn omega(v: &Mat, a_bar: &Mat, hat_b_inv: &[Mat], sigma: f64) -> Mat {
    let h_dim = a_bar[0].len();
    let m_dim = v[0].len();
    let mut out = vec![vec![0.0; m_dim]; h_dim];
    for h in 0..h_dim {
        for m in 0..m_dim {
            out[h][m] = ridge_term(v, a_bar, hat_b_inv, h, m) / (2.0 * sigma * sigma * hat_b_inv[m][h][h]).sqrt();
        }
    }
    out
}

pub fn zb_sum(v: &Mat, a_bar: &Mat, hat_b_inv: &[Mat], om: &Mat, sigma: f64, erf: fn(f64) -> f64) -> f64 {
    let mut s = 0.0;
    for m in 0..v[0].len() {
        for h in 0..a_bar[0].len() {
            s += (2.0 * sigma * sigma * hat_b_inv[m][h][h] / PI).sqrt() * (-om[h][m] * om[h][m]).exp()
                + ridge_term(v, a_bar, hat_b_inv, h, m) * erf(om[h][m]);
        }
    }
    s
}

/// (b̄, Σ_B) with Σ_B unclamped.
#[allow(clippy::too_many_arguments)]
pub fn update_b(
    v: &Mat,
    a_bar: &Mat,
    hat_b_inv: &[Mat],
    om: &Mat,
    k: f64,
    z_b: f64,
    sigma: f64,
    erf: fn(f64) -> f64,
) -> (Mat, Mat) {
    let h_dim = a_bar[0].len();
    let m_dim = v[0].len();
    let s2 = sigma * sigma;
    let mut b = vec![vec![0.0; m_dim]; h_dim];
    let mut var = vec![vec![0.0; m_dim]; h_dim];
    for h in 0..h_dim {
        for m in 0..m_dim {
            let inv = &hat_b_inv[m];
            let mut shift = 0.0;
            for hp in 0..h_dim {
                shift += s2 * inv[hp][h] / (k * z_b) * erf(om[hp][m]);
            }
            b[h][m] = ridge_term(v, a_bar, hat_b_inv, h, m) - shift;
            let mut first = 0.0;
            for hp in 0..h_dim {
                first += (2.0 / (PI * s2 * inv[hp][hp])).sqrt() * (s2 * inv[hp][h]).powi(2) / (k * z_b)
                    * (-om[hp][m] * om[hp][m]).exp();
            }
            var[h][m] = s2 * inv[h][h] - first - shift * shift;
        }
    }
    (b, var)
}

/// Largest entrywise relative error; entries far below the vector's scale are
/// compared relative to `1e-3 · max|b|` instead of their own magnitude.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let floor = 1e-3 * b.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())).max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn flat(m: &Mat) -> Vec<f64> {
    m.concat()
}
