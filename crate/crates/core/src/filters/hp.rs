//! Hodrick-Prescott smoothing and its boosted (iterated) variant.
//!
//! The smoother matrix is `S(lambda) = (I + lambda D D')^{-1}` with `D'` the
//! `(T-2) x T` second-difference operator. The cycle is evaluated through the
//! identity `I - S(lambda) = D (D'D + I/lambda)^{-1} D'`, whose banded system
//! stays well conditioned even for very large `lambda`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::decomposition::{Decomposition, Method};
use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::series::TimeSeries;

/// Largest number of boosting passes under information-criterion stopping.
pub const BHP_MAX_ITER: usize = 100;

/// Applies `D'` (second differences): output length `T - 2`.
fn second_diff(z: &[f64]) -> Vec<f64> {
    z.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect()
}

/// Applies `D`: input length `T - 2`, output length `T`.
fn second_diff_adjoint(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len() + 2];
    for (k, x) in v.iter().enumerate() {
        out[k] += x;
        out[k + 1] -= 2.0 * x;
        out[k + 2] += x;
    }
    out
}

/// Cholesky factor of the pentadiagonal matrix `D'D + eps I`, stored by bands.
struct PentaCholesky {
    d0: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl PentaCholesky {
    fn new(n: usize, eps: f64) -> Self {
        // D'D has constant bands (6, -4, 1).
        let mut d0 = vec![0.0; n];
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        for i in 0..n {
            let a2 = if i >= 2 { 1.0 } else { 0.0 };
            let a1 = if i >= 1 { -4.0 } else { 0.0 };
            // L[i][i-2], L[i][i-1], L[i][i]
            let l2 = if i >= 2 { a2 / d0[i - 2] } else { 0.0 };
            let l1 = if i >= 1 {
                let s = if i >= 2 { l2 * d1[i - 1] } else { 0.0 };
                (a1 - s) / d0[i - 1]
            } else {
                0.0
            };
            let diag = 6.0 + eps - l1 * l1 - l2 * l2;
            d0[i] = diag.sqrt();
            d1[i] = l1;
            d2[i] = l2;
        }
        Self { d0, d1, d2 }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            if i >= 1 {
                s -= self.d1[i] * y[i - 1];
            }
            if i >= 2 {
                s -= self.d2[i] * y[i - 2];
            }
            y[i] = s / self.d0[i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            if i + 1 < n {
                s -= self.d1[i + 1] * x[i + 1];
            }
            if i + 2 < n {
                s -= self.d2[i + 2] * x[i + 2];
            }
            x[i] = s / self.d0[i];
        }
        x
    }
}

/// Reusable HP operator for a fixed `(T, lambda)`.
pub struct HpSmoother {
    t: usize,
    lambda: f64,
    chol: Option<PentaCholesky>,
}

impl HpSmoother {
    pub fn new(t: usize, lambda: f64) -> Result<Self> {
        if t < 4 {
            return Err(Error::SampleTooShort { t, needed: 4 });
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        let chol = (lambda > 0.0).then(|| PentaCholesky::new(t - 2, 1.0 / lambda));
        Ok(Self { t, lambda, chol })
    }

    /// `(I - S(lambda)) z`.
    pub fn cycle(&self, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.t);
        match &self.chol {
            None => vec![0.0; z.len()],
            Some(c) => second_diff_adjoint(&c.solve(&second_diff(z))),
        }
    }

    pub fn trend(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(self.cycle(z)).map(|(v, c)| v - c).collect()
    }

    /// Eigenvalues of `S(lambda)` in descending order.
    fn smoother_eigenvalues(&self) -> Vec<f64> {
        let n = self.t - 2;
        let dtd = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 6.0,
            1 => -4.0,
            2 => 1.0,
            _ => 0.0,
        });
        let (mu, _) = sym_eigen_desc(dtd);
        // DD' shares the nonzero spectrum of D'D and has two zero eigenvalues.
        let mut s: Vec<f64> = mu
            .iter()
            .map(|m| 1.0 / (1.0 + self.lambda * m.max(0.0)))
            .collect();
        s.extend([1.0, 1.0]);
        s
    }
}

pub fn hp_decompose(z: &TimeSeries, lambda: f64) -> Result<Decomposition> {
    let hp = HpSmoother::new(z.len(), lambda)?;
    let high = hp.cycle(&z.values);
    let low = z.values.iter().zip(&high).map(|(v, c)| v - c).collect();
    Ok(Decomposition {
        low: z.with_values(low),
        high: z.with_values(high),
        method: Method::Hp { lambda },
        coeffs: None,
    })
}

/// Stopping rule for boosting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BhpStopping {
    Fixed(usize),
    /// Stop at the first pass where the information criterion increases.
    InformationCriterion,
}

/// Boosted HP: `H = (I - S)^m z`, `L = z - H`.
pub fn bhp_decompose(z: &TimeSeries, lambda: f64, stopping: BhpStopping) -> Result<Decomposition> {
    let hp = HpSmoother::new(z.len(), lambda)?;
    let (high, m) = match stopping {
        BhpStopping::Fixed(m) => {
            if m == 0 {
                return Err(Error::InvalidInput("boosting needs m >= 1".into()));
            }
            let mut c = z.values.clone();
            for _ in 0..m {
                c = hp.cycle(&c);
            }
            (c, m)
        }
        BhpStopping::InformationCriterion => boost_with_ic(&hp, &z.values),
    };
    let low = z.values.iter().zip(&high).map(|(v, c)| v - c).collect();
    Ok(Decomposition {
        low: z.with_values(low),
        high: z.with_values(high),
        method: Method::Bhp { lambda, m },
        coeffs: None,
    })
}

/// `IC(m) = c_m'c_m / c_1'c_1 + log(T) tr(B_m) / (T - tr(B_m))`,
/// with `B_m = I - (I - S)^m`.
fn boost_with_ic(hp: &HpSmoother, z: &[f64]) -> (Vec<f64>, usize) {
    let t = z.len() as f64;
    let s = hp.smoother_eigenvalues();
    let trace_b = |m: usize| -> f64 { s.iter().map(|sk| 1.0 - (1.0 - sk).powi(m as i32)).sum() };
    let ss = |c: &[f64]| c.iter().map(|v| v * v).sum::<f64>();

    let mut cycle = hp.cycle(z);
    let base = ss(&cycle);
    if base == 0.0 {
        return (cycle, 1);
    }
    let ic = |c: &[f64], m: usize| {
        let tb = trace_b(m);
        ss(c) / base + t.ln() * tb / (t - tb)
    };
    let mut best = ic(&cycle, 1);
    let mut m = 1;
    while m < BHP_MAX_ITER {
        let next = hp.cycle(&cycle);
        let val = ic(&next, m + 1);
        if !(val < best) {
            break;
        }
        best = val;
        cycle = next;
        m += 1;
    }
    (cycle, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normals, stream};

    fn dense_hp(z: &[f64], lambda: f64) -> Vec<f64> {
        let t = z.len();
        let mut k = DMatrix::<f64>::identity(t, t);
        for r in 0..t - 2 {
            let v = [(r, 1.0), (r + 1, -2.0), (r + 2, 1.0)];
            for (i, a) in v {
                for (j, b) in v {
                    k[(i, j)] += lambda * a * b;
                }
            }
        }
        let rhs = nalgebra::DVector::from_column_slice(z);
        k.lu().solve(&rhs).unwrap().iter().copied().collect()
    }

    #[test]
    fn lambda_zero_is_identity() {
        let z = TimeSeries::from_values("z", 1990, vec![1.0, 4.0, -2.0, 0.5, 3.0]).unwrap();
        let d = hp_decompose(&z, 0.0).unwrap();
        assert_eq!(d.low.values, z.values);
    }

    #[test]
    fn matches_dense_solve_at_t5() {
        let zv = normals(&mut stream(11, 0), 5);
        let z = TimeSeries::from_values("z", 2000, zv.clone()).unwrap();
        for lambda in [0.5, 6.25, 100.0, 1600.0] {
            let d = hp_decompose(&z, lambda).unwrap();
            let oracle = dense_hp(&zv, lambda);
            for (a, b) in d.low.values.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-12, "lambda {lambda}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn huge_lambda_gives_linear_trend() {
        let zv = normals(&mut stream(12, 0), 60);
        let z = TimeSeries::from_values("z", 1964, zv.clone()).unwrap();
        let d = hp_decompose(&z, 1e12).unwrap();
        let n = zv.len() as f64;
        let tbar = (n - 1.0) / 2.0;
        let zbar = zv.iter().sum::<f64>() / n;
        let sxy: f64 = zv
            .iter()
            .enumerate()
            .map(|(t, v)| (t as f64 - tbar) * (v - zbar))
            .sum();
        let sxx: f64 = (0..zv.len()).map(|t| (t as f64 - tbar).powi(2)).sum();
        let slope = sxy / sxx;
        for (t, l) in d.low.values.iter().enumerate() {
            let fit = zbar + slope * (t as f64 - tbar);
            assert!((l - fit).abs() < 1e-4);
        }
    }

    #[test]
    fn boosting_once_equals_hp() {
        let z = TimeSeries::from_values("z", 1900, normals(&mut stream(13, 0), 50)).unwrap();
        let a = hp_decompose(&z, 100.0).unwrap();
        let b = bhp_decompose(&z, 100.0, BhpStopping::Fixed(1)).unwrap();
        assert_eq!(a.low.values, b.low.values);
    }

    #[test]
    fn boosting_twice_is_hp_of_residual() {
        let zv = normals(&mut stream(14, 0), 50);
        let z = TimeSeries::from_values("z", 1900, zv.clone()).unwrap();
        let two = bhp_decompose(&z, 100.0, BhpStopping::Fixed(2)).unwrap();
        let first = dense_hp(&zv, 100.0);
        let resid: Vec<f64> = zv.iter().zip(&first).map(|(a, b)| a - b).collect();
        let second = dense_hp(&resid, 100.0);
        for t in 0..zv.len() {
            assert!((two.low.values[t] - (first[t] + second[t])).abs() <= 1e-12);
        }
    }

    #[test]
    fn ic_stopping_on_trend_plus_noise_stops_early() {
        for rep in 0..20 {
            let noise = normals(&mut stream(15, rep), 100);
            let zv: Vec<f64> = noise
                .iter()
                .enumerate()
                .map(|(t, e)| 0.05 * t as f64 + e)
                .collect();
            let z = TimeSeries::from_values("z", 1900, zv).unwrap();
            let d = bhp_decompose(&z, 1600.0, BhpStopping::InformationCriterion).unwrap();
            match d.method {
                Method::Bhp { m, .. } => assert!(m <= 10, "m = {m}"),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn too_short() {
        let z = TimeSeries::from_values("z", 1900, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            hp_decompose(&z, 1.0),
            Err(Error::SampleTooShort { .. })
        ));
    }
}
