//! Low-frequency cosine projections.
//!
//! The trend is the least-squares projection of a series on a constant and
//! the first `q` cosine functions `psi_j(s) = sqrt(2) cos(j s pi)` evaluated
//! at the midpoints `s_t = (t - 1/2) / T`. On this grid the columns are
//! exactly orthogonal with squared norm `T`, so the projection coefficients
//! are `T^{-1} Psi' z` and no linear system has to be solved.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;

use crate::decomposition::{Decomposition, Method};
use crate::error::{Error, Result};
use crate::series::{mean, TimeSeries};

/// Cosine basis evaluated on a `T`-point grid.
#[derive(Debug, Clone)]
pub struct MwBasis {
    t: usize,
    q: usize,
    /// T x q
    psi: DMatrix<f64>,
}

impl MwBasis {
    pub fn new(t: usize, q: usize) -> Result<Self> {
        if q == 0 || 2 * q > t {
            return Err(Error::QTooLarge { q, t });
        }
        let tf = t as f64;
        let psi = DMatrix::from_fn(t, q, |row, col| {
            let s = (row as f64 + 0.5) / tf;
            SQRT_2 * ((col + 1) as f64 * s * PI).cos()
        });
        Ok(Self { t, q, psi })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    /// `T^{-1} Psi' z`.
    pub fn coefficients(&self, z: &[f64]) -> Vec<f64> {
        let tf = self.t as f64;
        (0..self.q)
            .map(|j| {
                self.psi
                    .column(j)
                    .iter()
                    .zip(z)
                    .map(|(p, v)| p * v)
                    .sum::<f64>()
                    / tf
            })
            .collect()
    }

    /// `Psi c`, the time-domain path of a coefficient vector (without constant).
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        (0..self.t)
            .map(|t| (0..self.q).map(|j| self.psi[(t, j)] * coeffs[j]).sum())
            .collect()
    }

    /// Fitted values of the projection of `z` on `[1, Psi]`.
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        let m = mean(z);
        self.synthesize(&self.coefficients(z))
            .into_iter()
            .map(|v| v + m)
            .collect()
    }
}

/// Splits `z` into its projection on `[1, Psi_T]` and the residual.
pub fn mw_decompose(z: &TimeSeries, q: usize) -> Result<Decomposition> {
    let basis = MwBasis::new(z.len(), q)?;
    mw_decompose_with(z, &basis)
}

/// As [`mw_decompose`] with a precomputed basis (for repeated calls at one `T`).
pub fn mw_decompose_with(z: &TimeSeries, basis: &MwBasis) -> Result<Decomposition> {
    if basis.t() != z.len() {
        return Err(Error::IncompatibleAxes(format!(
            "basis built for T = {}, series has {}",
            basis.t(),
            z.len()
        )));
    }
    let coeffs = basis.coefficients(&z.values);
    let m = z.mean();
    let low: Vec<f64> = basis
        .synthesize(&coeffs)
        .into_iter()
        .map(|v| v + m)
        .collect();
    let high: Vec<f64> = z.values.iter().zip(&low).map(|(v, l)| v - l).collect();
    Ok(Decomposition {
        low: z.with_values(low),
        high: z.with_values(high),
        method: Method::Mw { q: basis.q() },
        coeffs: Some(coeffs),
    })
}

/// Shortest periodicity (in years) retained by the trend: `2T/q`.
pub fn mw_periodicity(t: usize, q: usize) -> f64 {
    2.0 * t as f64 / q as f64
}

/// Default `q`: the number of cosine terms whose cutoff periodicity is
/// closest to 32 years, `round(2T/32)` (8 at T = 129, 4 at T = 60).
pub fn default_q(t: usize) -> usize {
    ((2 * t) as f64 / 32.0).round().max(1.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_orthogonality() {
        let b = MwBasis::new(129, 16).unwrap();
        let g = b.psi().tr_mul(b.psi());
        for i in 0..16 {
            let col_sum: f64 = b.psi().column(i).sum();
            assert!(col_sum.abs() < 1e-10);
            for j in 0..16 {
                let expect = if i == j { 129.0 } else { 0.0 };
                assert!((g[(i, j)] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_series_has_no_high_component() {
        let z = TimeSeries::from_values("c", 1900, vec![3.5; 40]).unwrap();
        let d = mw_decompose(&z, 4).unwrap();
        assert!(d.low.values.iter().all(|v| (v - 3.5).abs() < 1e-12));
        assert!(d.high.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn basis_column_is_reproduced() {
        let b = MwBasis::new(60, 4).unwrap();
        let col: Vec<f64> = b.psi().column(0).iter().copied().collect();
        let z = TimeSeries::from_values("psi1", 1964, col.clone()).unwrap();
        let d = mw_decompose(&z, 4).unwrap();
        for (l, c) in d.low.values.iter().zip(&col) {
            assert!((l - c).abs() < 1e-12);
        }
        assert!(d.high.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn q_too_large() {
        let z = TimeSeries::from_values("z", 2000, vec![0.0; 10]).unwrap();
        assert_eq!(
            mw_decompose(&z, 6).unwrap_err(),
            Error::QTooLarge { q: 6, t: 10 }
        );
    }

    #[test]
    fn periodicity_values() {
        assert!((mw_periodicity(129, 8) - 32.25).abs() < 1e-12);
        assert!((mw_periodicity(129, 56) - 4.607).abs() < 1e-3);
        assert_eq!(mw_periodicity(50, 100), 1.0);
        assert_eq!(default_q(129), 8);
        assert_eq!(default_q(60), 4);
    }
}
