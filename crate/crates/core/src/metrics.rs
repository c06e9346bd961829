//! Reconstruction error and sparsity measures that quotient out the
//! permutation, sign and per-column scale degeneracy of `A·B`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Default magnitude below which a rescaled entry of b̄ counts as zero.
pub const SPARSITY_THRESHOLD: f64 = 1e-2;

/// Per ground-truth column `h`: the matched estimate column, its sign, and the
/// RMS normalizer of every estimate column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub assignment: Vec<usize>,
    pub signs: Vec<i8>,
    pub normalizers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse_a: f64,
    pub rmse_b: f64,
    pub rmse_v: f64,
    pub sparsity_b: f64,
    pub alignment: Alignment,
}

fn same_shape<T: Scalar>(op: &'static str, a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            op,
            expected: a.shape(),
            found: b.shape(),
        });
    }
    Ok(())
}

/// `N_h = √(Σ_l ā²_lh / L)` for every column.
pub fn column_normalizers<T: Scalar>(a_bar: &DenseMatrix<T>) -> Result<Vec<f64>> {
    let (l, h) = a_bar.shape();
    let mut sq = vec![0.0_f64; h];
    for r in 0..l {
        for (acc, x) in sq.iter_mut().zip(a_bar.row(r)) {
            let x = x.as_f64();
            *acc += x * x;
        }
    }
    sq.into_iter()
        .enumerate()
        .map(|(j, s)| {
            let n = (s / l as f64).sqrt();
            if n > 0.0 && n.is_finite() {
                Ok(n)
            } else {
                Err(Error::ZeroColumn(j))
            }
        })
        .collect()
}

/// RMSE_A: for every ground-truth column independently, the best estimate
/// column and sign after normalizing estimate columns to unit RMS.
///
/// Two ground-truth columns may select the same estimate column; see
/// [`brute_force_alignment`] for the one-to-one variant.
pub fn align_and_rmse_a<T: Scalar>(a_star: &DenseMatrix<T>, a_bar: &DenseMatrix<T>) -> Result<(f64, Alignment)> {
    same_shape("align_and_rmse_a", a_star, a_bar)?;
    let (l, h) = a_star.shape();
    let norms = column_normalizers(a_bar)?;
    let mut total = 0.0;
    let mut assignment = Vec::with_capacity(h);
    let mut signs = Vec::with_capacity(h);
    for target in 0..h {
        let mut best = (f64::INFINITY, 0, 1i8);
        for cand in 0..h {
            for sign in [1i8, -1] {
                let s = f64::from(sign) / norms[cand];
                let mut err = 0.0;
                for r in 0..l {
                    let d = a_star[(r, target)].as_f64() - s * a_bar[(r, cand)].as_f64();
                    err += d * d;
                }
                if err < best.0 {
                    best = (err, cand, sign);
                }
            }
        }
        total += best.0;
        assignment.push(best.1);
        signs.push(best.2);
    }
    Ok((
        (total / (l * h) as f64).sqrt(),
        Alignment {
            assignment,
            signs,
            normalizers: norms,
        },
    ))
}

/// RMSE_B with the sign of each row fixed by the A-side alignment and the row
/// chosen by its own minimum.
pub fn rmse_b<T: Scalar>(b_star: &DenseMatrix<T>, b_bar: &DenseMatrix<T>, align: &Alignment) -> Result<f64> {
    same_shape("rmse_b", b_star, b_bar)?;
    let (h, m) = b_star.shape();
    if align.signs.len() != h || align.normalizers.len() != h {
        return Err(Error::DimensionMismatch {
            op: "rmse_b alignment",
            expected: (h, 1),
            found: (align.signs.len(), 1),
        });
    }
    let mut total = 0.0;
    for target in 0..h {
        let sign = f64::from(align.signs[target]);
        let best = (0..h)
            .map(|cand| {
                let scale = sign * align.normalizers[cand];
                b_star
                    .row(target)
                    .iter()
                    .zip(b_bar.row(cand))
                    .map(|(x, y)| {
                        let d = x.as_f64() - scale * y.as_f64();
                        d * d
                    })
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        total += best;
    }
    Ok((total / (h * m) as f64).sqrt())
}

/// `√(Σ_lm (V − ā·b̄)² / LM)`.
pub fn rmse_v<T: Scalar>(v: &DenseMatrix<T>, a_bar: &DenseMatrix<T>, b_bar: &DenseMatrix<T>) -> Result<f64> {
    if a_bar.rows() != v.rows() || b_bar.cols() != v.cols() || a_bar.cols() != b_bar.rows() {
        return Err(Error::DimensionMismatch {
            op: "rmse_v",
            expected: v.shape(),
            found: (a_bar.rows(), b_bar.cols()),
        });
    }
    let mut total = 0.0;
    for r in 0..v.rows() {
        let a_row = a_bar.row(r);
        for (c, &x) in v.row(r).iter().enumerate() {
            let mut p = 0.0;
            for (k, &a) in a_row.iter().enumerate() {
                p += a.as_f64() * b_bar[(k, c)].as_f64();
            }
            let d = x.as_f64() - p;
            total += d * d;
        }
    }
    Ok((total / (v.rows() * v.cols()) as f64).sqrt())
}

/// Fraction of entries of `N_h·b̄_hm` below `threshold` in magnitude.
pub fn sparsity_b<T: Scalar>(a_bar: &DenseMatrix<T>, b_bar: &DenseMatrix<T>, threshold: f64) -> Result<f64> {
    if a_bar.cols() != b_bar.rows() {
        return Err(Error::DimensionMismatch {
            op: "sparsity_b",
            expected: (a_bar.cols(), b_bar.cols()),
            found: b_bar.shape(),
        });
    }
    let norms = column_normalizers(a_bar)?;
    let mut small = 0usize;
    for (h, n) in norms.iter().enumerate() {
        small += b_bar.row(h).iter().filter(|x| (n * x.as_f64()).abs() < threshold).count();
    }
    Ok(small as f64 / b_bar.as_slice().len() as f64)
}

/// All four measures for an estimate against known factors.
pub fn evaluate<T: Scalar>(
    a_star: &DenseMatrix<T>,
    b_star: &DenseMatrix<T>,
    v: &DenseMatrix<T>,
    a_bar: &DenseMatrix<T>,
    b_bar: &DenseMatrix<T>,
    threshold: f64,
) -> Result<MetricsReport> {
    let (rmse_a, alignment) = align_and_rmse_a(a_star, a_bar)?;
    Ok(MetricsReport {
        rmse_a,
        rmse_b: rmse_b(b_star, b_bar, &alignment)?,
        rmse_v: rmse_v(v, a_bar, b_bar)?,
        sparsity_b: sparsity_b(a_bar, b_bar, threshold)?,
        alignment,
    })
}

pub const BRUTE_FORCE_MAX_H: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceAlignment {
    /// Same objective as [`align_and_rmse_a`].
    pub per_column_rmse: f64,
    pub per_column: Alignment,
    /// Best one-to-one assignment over all `H!` permutations.
    pub permutation_rmse: f64,
    pub permutation: Vec<usize>,
    pub permutation_signs: Vec<i8>,
}

/// Exhaustive alignment through the expanded squared distance
/// `‖a*‖² + ‖ā‖²/N² − 2s⟨a*, ā⟩/N`, plus the best permutation.
pub fn brute_force_alignment<T: Scalar>(a_star: &DenseMatrix<T>, a_bar: &DenseMatrix<T>) -> Result<BruteForceAlignment> {
    same_shape("brute_force_alignment", a_star, a_bar)?;
    let (l, h) = a_star.shape();
    if h > BRUTE_FORCE_MAX_H {
        return Err(Error::TooLarge {
            h,
            max: BRUTE_FORCE_MAX_H,
        });
    }
    let norms = column_normalizers(a_bar)?;
    let col = |m: &DenseMatrix<T>, j: usize| -> Vec<f64> { m.column(j).into_iter().map(|x| x.as_f64()).collect() };
    let star: Vec<Vec<f64>> = (0..h).map(|j| col(a_star, j)).collect();
    let est: Vec<Vec<f64>> = (0..h).map(|j| col(a_bar, j)).collect();
    let sq = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    // cost[target][cand][sign index]
    let mut cost = vec![vec![[0.0; 2]; h]; h];
    for t in 0..h {
        for c in 0..h {
            let cross: f64 = star[t].iter().zip(&est[c]).map(|(x, y)| x * y).sum();
            let base = sq(&star[t]) + sq(&est[c]) / (norms[c] * norms[c]);
            cost[t][c] = [base - 2.0 * cross / norms[c], base + 2.0 * cross / norms[c]];
        }
    }
    let pick = |row: &[f64; 2]| if row[1] < row[0] { (row[1].max(0.0), -1i8) } else { (row[0].max(0.0), 1i8) };

    let mut per_total = 0.0;
    let mut assignment = vec![0; h];
    let mut signs = vec![1i8; h];
    for t in 0..h {
        let mut best = (f64::INFINITY, 0, 1i8);
        for c in 0..h {
            let (v, s) = pick(&cost[t][c]);
            if v < best.0 {
                best = (v, c, s);
            }
        }
        per_total += best.0;
        assignment[t] = best.1;
        signs[t] = best.2;
    }

    let mut perm: Vec<usize> = (0..h).collect();
    let mut best_perm = (f64::INFINITY, perm.clone());
    for_each_permutation(&mut perm, 0, &mut |p| {
        let total: f64 = p.iter().enumerate().map(|(t, &c)| pick(&cost[t][c]).0).sum();
        if total < best_perm.0 {
            best_perm = (total, p.to_vec());
        }
    });
    let permutation_signs = best_perm.1.iter().enumerate().map(|(t, &c)| pick(&cost[t][c]).1).collect();
    let denom = (l * h) as f64;
    Ok(BruteForceAlignment {
        per_column_rmse: (per_total / denom).sqrt(),
        per_column: Alignment {
            assignment,
            signs,
            normalizers: norms,
        },
        permutation_rmse: (best_perm.0 / denom).sqrt(),
        permutation: best_perm.1,
        permutation_signs,
    })
}

fn for_each_permutation(items: &mut [usize], start: usize, f: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        f(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        for_each_permutation(items, start + 1, f);
        items.swap(start, i);
    }
}
