//! Hamilton's regression filter: the trend at `t + h` is the least-squares
//! forecast of `z_{t+h}` from `(1, z_t, ..., z_{t-p})`, the cycle is the
//! forecast error. Components exist only for the last `T - p - h` years.

use nalgebra::{DMatrix, DVector};

use crate::decomposition::{Decomposition, Method};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

pub const DEFAULT_P: usize = 1;
pub const DEFAULT_H: usize = 2;

/// Hamilton decomposition plus the forecast-regression coefficients
/// `(intercept, z_t, ..., z_{t-p})`.
pub fn jh_regression(z: &TimeSeries, p: usize, h: usize) -> Result<(Decomposition, Vec<f64>)> {
    let t = z.len();
    if h == 0 {
        return Err(Error::InvalidInput("horizon h must be >= 1".into()));
    }
    let needed = p + h + 10;
    if t < needed {
        return Err(Error::SampleTooShort { t, needed });
    }
    // target index (0-based) runs over p + h .. T
    let rows = t - p - h;
    let x = DMatrix::from_fn(rows, p + 2, |r, c| {
        let base = r + p; // index of z_t
        if c == 0 {
            1.0
        } else {
            z.values[base - (c - 1)]
        }
    });
    let y = DVector::from_fn(rows, |r, _| z.values[r + p + h]);
    // Fitted values are unique even when the lags are collinear (e.g. an
    // exact trend), so a minimum-norm SVD solve is used.
    let svd = x.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max() * rows as f64;
    let beta = svd
        .solve(&y, tol)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let fitted = &x * &beta;
    let years = z.years[p + h..].to_vec();
    let low: Vec<f64> = fitted.iter().copied().collect();
    let high: Vec<f64> = y.iter().zip(&low).map(|(a, b)| a - b).collect();
    let mut low_ts = z.with_values(vec![0.0; t]);
    low_ts.years = years.clone();
    low_ts.values = low;
    let mut high_ts = low_ts.clone();
    high_ts.values = high;
    Ok((
        Decomposition {
            low: low_ts,
            high: high_ts,
            method: Method::Jh { p, h },
            coeffs: None,
        },
        beta.iter().copied().collect(),
    ))
}

pub fn jh_decompose(z: &TimeSeries, p: usize, h: usize) -> Result<Decomposition> {
    jh_regression(z, p, h).map(|(d, _)| d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normals, stream};

    #[test]
    fn linear_trend_is_perfectly_predicted() {
        let z = TimeSeries::from_values("z", 1900, (0..40).map(|t| 2.0 + 0.3 * t as f64).collect())
            .unwrap();
        for p in 1..=3 {
            let d = jh_decompose(&z, p, 2).unwrap();
            assert!(d.high.values.iter().all(|v| v.abs() < 1e-10));
            assert_eq!(d.low.len(), 40 - p - 2);
            assert_eq!(d.undefined_prefix(&z), p + 2);
        }
        let d = jh_decompose(&z, 1, 2).unwrap();
        assert!(d.additivity_error(&z) < 1e-12);
    }

    #[test]
    fn white_noise_slopes_vanish() {
        let z = TimeSeries::from_values("z", 1, normals(&mut stream(21, 0), 2000)).unwrap();
        let (_, beta) = jh_regression(&z, 1, 2).unwrap();
        assert!(beta[1].abs() < 0.1 && beta[2].abs() < 0.1, "{beta:?}");
    }

    #[test]
    fn short_sample_rejected() {
        let z = TimeSeries::from_values("z", 1, vec![0.0; 12]).unwrap();
        assert_eq!(
            jh_decompose(&z, 1, 2).unwrap_err(),
            Error::SampleTooShort { t: 12, needed: 13 }
        );
    }
}
