//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Reciprocal condition threshold (on the unit-diagonal scaled Gram matrix)
/// below which a design is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Least-squares fit via the normal equations.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub beta: DVector<f64>,
    pub xtx_inv: DMatrix<f64>,
}

/// `(X'X)^{-1}` with a scaled rank check.
pub fn gram_inverse(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = x.ncols();
    if x.nrows() < k {
        return Err(Error::RankDeficientDesign(format!(
            "{} observations for {} regressors",
            x.nrows(),
            k
        )));
    }
    let xtx = x.tr_mul(x);
    let scale: Vec<f64> = (0..k).map(|j| xtx[(j, j)].sqrt()).collect();
    if let Some(j) = scale.iter().position(|s| *s <= f64::MIN_POSITIVE) {
        return Err(Error::RankDeficientDesign(format!(
            "regressor {j} is identically zero"
        )));
    }
    let scaled = DMatrix::from_fn(k, k, |i, j| xtx[(i, j)] / (scale[i] * scale[j]));
    let eig = SymmetricEigen::new(scaled.clone());
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min < RANK_TOL {
        return Err(Error::RankDeficientDesign(format!(
            "smallest scaled eigenvalue {min:.3e}"
        )));
    }
    let inv_scaled = scaled
        .cholesky()
        .ok_or_else(|| Error::RankDeficientDesign("Gram matrix not positive definite".into()))?
        .inverse();
    Ok(DMatrix::from_fn(k, k, |i, j| {
        inv_scaled[(i, j)] / (scale[i] * scale[j])
    }))
}

pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares> {
    let xtx_inv = gram_inverse(x)?;
    let beta = &xtx_inv * x.tr_mul(y);
    Ok(LeastSquares { beta, xtx_inv })
}

/// In-place lower Cholesky factor of a row-major `n x n` symmetric matrix
/// (only the lower triangle is read). Returns `log det`.
pub fn cholesky_log_det(a: &mut [f64], n: usize) -> Result<f64> {
    debug_assert_eq!(a.len(), n * n);
    let mut log_det = 0.0;
    for i in 0..n {
        let (done, rest) = a.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        for j in 0..i {
            let row_j = &done[j * n..j * n + n];
            let s = dot(&row_i[..j], &row_j[..j]);
            row_i[j] = (row_i[j] - s) / row_j[j];
        }
        let d = row_i[i] - dot(&row_i[..i], &row_i[..i]);
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::SingularCovariance);
        }
        row_i[i] = d.sqrt();
        log_det += d.ln();
    }
    Ok(log_det)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = acc[0] + acc[1] + acc[2] + acc[3];
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Solves `L y = b` in place for a row-major lower-triangular `L`.
pub fn forward_substitute(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        let s = dot(row, &b[..i]);
        b[i] = (b[i] - s) / l[i * n + i];
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
pub fn sym_eigen_desc(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Replaces negative eigenvalues of a symmetric matrix by zero.
pub fn psd_repair(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|v| *v >= 0.0) {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

/// Linear-interpolation quantile (Hyndman-Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_matches_nalgebra() {
        let n = 7;
        let b = DMatrix::from_fn(n, n, |i, j| ((i * 3 + j * 5) % 11) as f64 / 7.0 - 0.4);
        let a = &b * b.transpose() + DMatrix::identity(n, n);
        let mut flat: Vec<f64> = (0..n * n).map(|k| a[(k / n, k % n)]).collect();
        let ld = cholesky_log_det(&mut flat, n).unwrap();
        let chol = a.clone().cholesky().unwrap();
        let l = chol.l();
        for i in 0..n {
            for j in 0..=i {
                assert!((flat[i * n + j] - l[(i, j)]).abs() < 1e-12);
            }
        }
        let ld_ref: f64 = (0..n).map(|i| 2.0 * l[(i, i)].ln()).sum();
        assert!((ld - ld_ref).abs() < 1e-12);
    }

    #[test]
    fn rank_deficiency_detected() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
        assert!(matches!(
            gram_inverse(&x),
            Err(Error::RankDeficientDesign(_))
        ));
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
    }
}
