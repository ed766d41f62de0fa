//! Unobserved-components model with a fractionally integrated trend.
//!
//! The observed series is `z = L + H` where
//!
//! ```text
//! (1 - L)^d L_t = e_L,t,      e_L ~ (0, sigma_L^2)
//!           H_t = a(L) e_H,t, e_H ~ (0, sigma_H^2),  a(L) = 1 + a_1 L + ... + a_p L^p
//! ```
//!
//! with zero pre-sample values. Writing `S` for the lower-triangular Toeplitz
//! matrix of the fractional-difference weights and `B` for that of
//! `b(L) = a(L)^{-1}`, the optimal smoother is
//!
//! ```text
//! L = (B'B + nu S'S)^{-1} B'B z,   H = nu (B'B + nu S'S)^{-1} S'S z,   nu = sigma_H^2 / sigma_L^2.
//! ```
//!
//! The first `round(d)` rows of `S` (the initial innovations of the
//! integrated part) are treated as diffuse and dropped. With `d = 2` and
//! `a(L) = 1` the smoother is then exactly the Hodrick-Prescott filter with
//! `lambda = nu`, and with `d = 1` it is the local-level smoother with a
//! diffuse initial level. The likelihood is the exact Gaussian likelihood of
//! the differenced data `S z` with those rows removed.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decomposition::{Decomposition, Method};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_log_det, forward_substitute, sample_sd};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::rng::{normals, StreamRng};
use crate::series::TimeSeries;

pub const MIN_T: usize = 10;
/// Box for `d` during fitting.
pub const FIT_D_BOUNDS: (f64, f64) = (0.51, 1.49);
pub const SIGMA_L_RANGE: (f64, f64) = (0.01, 0.5);
/// Starting values of `d` for the multi-start search.
pub const DEFAULT_D_STARTS: [f64; 5] = [0.6, 0.9, 1.1, 1.3, 1.45];

/// `pi_0 = 1`, `pi_j = (j - d - 1)/j * pi_{j-1}`: coefficients of `(1 - L)^d`.
pub fn fracdiff_coeffs(d: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push(1.0);
    for j in 1..n {
        let jf = j as f64;
        out.push((jf - d - 1.0) / jf * out[j - 1]);
    }
    out
}

/// Coefficients `b_0..b_{n-1}` of `a(L)^{-1}`, where `a(L) = 1 + a_1 L + ... + a_p L^p`.
pub fn ma_inverse_coeffs(a: &[f64], n: usize) -> Result<Vec<f64>> {
    check_invertible(a)?;
    let mut b = Vec::with_capacity(n);
    for k in 0..n {
        if k == 0 {
            b.push(1.0);
            continue;
        }
        let s: f64 = (1..=a.len().min(k)).map(|j| a[j - 1] * b[k - j]).sum();
        b.push(-s);
    }
    Ok(b)
}

/// Roots of `a(L)` must lie outside the unit circle.
pub fn check_invertible(a: &[f64]) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonInvertiblePolynomial(
            "non-finite coefficient".into(),
        ));
    }
    match a.len() {
        0 => Ok(()),
        1 => {
            if a[0].abs() < 1.0 {
                Ok(())
            } else {
                Err(Error::NonInvertiblePolynomial(format!(
                    "|a_1| = {} >= 1",
                    a[0].abs()
                )))
            }
        }
        p => {
            // Roots of a(L) outside the unit circle <=> eigenvalues of the
            // companion matrix of z^p + a_1 z^{p-1} + ... + a_p inside it.
            let comp = DMatrix::from_fn(p, p, |i, j| {
                if i == 0 {
                    -a[j]
                } else if i == j + 1 {
                    1.0
                } else {
                    0.0
                }
            });
            let max_mod = comp
                .complex_eigenvalues()
                .iter()
                .map(|c| c.norm())
                .fold(0.0, f64::max);
            if max_mod < 1.0 {
                Ok(())
            } else {
                Err(Error::NonInvertiblePolynomial(format!(
                    "a root of a(L) lies on or inside the unit circle (modulus {:.4})",
                    1.0 / max_mod
                )))
            }
        }
    }
}

/// Parameters of the fractional UC model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcParams {
    pub d: f64,
    pub sigma_l: f64,
    pub sigma_h: f64,
    #[serde(default)]
    pub a: Vec<f64>,
}

impl UcParams {
    pub fn new(d: f64, sigma_l: f64, sigma_h: f64, a: Vec<f64>) -> Result<Self> {
        let p = Self {
            d,
            sigma_l,
            sigma_h,
            a,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d > -0.5 && self.d <= 2.0) {
            return Err(Error::InvalidInput(format!(
                "d = {} outside (-0.5, 2]",
                self.d
            )));
        }
        if !(self.sigma_l > 0.0) || !(self.sigma_h >= 0.0) || !self.sigma_h.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sigma_L = {} and sigma_H = {} must be positive",
                self.sigma_l, self.sigma_h
            )));
        }
        check_invertible(&self.a)
    }

    /// Noise-to-signal ratio `sigma_H^2 / sigma_L^2`.
    pub fn nu(&self) -> f64 {
        (self.sigma_h / self.sigma_l).powi(2)
    }

    fn method(&self) -> Method {
        Method::Uc {
            d: self.d,
            sigma_l: self.sigma_l,
            sigma_h: self.sigma_h,
            a: self.a.clone(),
        }
    }
}

/// Number of leading innovation rows treated as diffuse: the integer part
/// of the nonstationarity, `round(d)` for `d > 1/2`, else zero.
pub fn diffuse_rows(d: f64) -> usize {
    if d > 0.5 {
        (d + 0.5).floor() as usize
    } else {
        0
    }
}

/// Dense `T x T` lower-triangular Toeplitz matrix with first column `c`.
fn lower_toeplitz(c: &[f64]) -> DMatrix<f64> {
    let t = c.len();
    DMatrix::from_fn(t, t, |i, j| if i >= j { c[i - j] } else { 0.0 })
}

fn check_input(z: &TimeSeries) -> Result<()> {
    if z.len() < MIN_T {
        return Err(Error::SampleTooShort {
            t: z.len(),
            needed: MIN_T,
        });
    }
    let sd = sample_sd(&z.values);
    let m = z.mean();
    if m.abs() > 1e-6 * sd.max(f64::MIN_POSITIVE) && z.demeaned_before.is_none() {
        log::warn!(
            "series {} has mean {m:.4} (sd {sd:.4}); the UC model assumes demeaned input",
            z.unit_id
        );
    }
    Ok(())
}

/// Optimal smoother for given parameters.
pub fn uc_filter(z: &TimeSeries, params: &UcParams) -> Result<Decomposition> {
    params.validate()?;
    check_input(z)?;
    let (low, high) = smooth(&z.values, params)?;
    Ok(Decomposition {
        low: z.with_values(low),
        high: z.with_values(high),
        method: params.method(),
        coeffs: None,
    })
}

fn smooth(z: &[f64], params: &UcParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = z.len();
    let m = diffuse_rows(params.d).min(t);
    let s_full = lower_toeplitz(&fracdiff_coeffs(params.d, t));
    let s = s_full.rows(m, t - m).into_owned();
    let b = lower_toeplitz(&ma_inverse_coeffs(&params.a, t)?);
    let btb = b.tr_mul(&b);
    let sts = s.tr_mul(&s);
    let nu = params.nu();
    let system = &btb + &sts * nu;
    let chol = system.cholesky().ok_or(Error::SingularSystem)?;
    let zv = DVector::from_column_slice(z);
    let low = chol.solve(&(&btb * &zv));
    let high = chol.solve(&(&sts * &zv)) * nu;
    if low.iter().chain(high.iter()).any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok((
        low.iter().copied().collect(),
        high.iter().copied().collect(),
    ))
}

/// Exact Gaussian log-likelihood of `z` (see module docs for the diffuse rows).
pub fn uc_loglik(z: &TimeSeries, params: &UcParams) -> Result<f64> {
    params.validate()?;
    check_input(z)?;
    loglik_values(&z.values, params)
}

fn loglik_values(z: &[f64], params: &UcParams) -> Result<f64> {
    let t = z.len();
    let m = diffuse_rows(params.d).min(t);
    let n = t - m;
    let pi = fracdiff_coeffs(params.d, t);
    // w = S z with the diffuse rows removed; w = e_L + C e_H with C = S a(L).
    let mut w: Vec<f64> = (m..t)
        .map(|i| (0..=i).map(|k| pi[k] * z[i - k]).sum())
        .collect();
    let mut c = pi.clone();
    for (j, aj) in params.a.iter().enumerate() {
        for k in (j + 1)..t {
            c[k] += aj * pi[k - j - 1];
        }
    }
    // G = C C' via G_ij = G_{i-1,j-1} + c_i c_j, restricted to rows/cols >= m.
    let sl2 = params.sigma_l * params.sigma_l;
    let sh2 = params.sigma_h * params.sigma_h;
    let mut g_prev = vec![0.0; t];
    let mut cov = vec![0.0; n * n];
    // Row i of G (lower triangle j <= i) computed from row i-1.
    let mut g_row = vec![0.0; t];
    for i in 0..t {
        for j in 0..=i {
            let prev = if i > 0 && j > 0 { g_prev[j - 1] } else { 0.0 };
            g_row[j] = prev + c[i] * c[j];
        }
        if i >= m {
            let r = i - m;
            for j in m..=i {
                cov[r * n + (j - m)] = sh2 * g_row[j];
            }
            cov[r * n + r] += sl2;
        }
        std::mem::swap(&mut g_prev, &mut g_row);
    }
    let log_det = cholesky_log_det(&mut cov, n)?;
    forward_substitute(&cov, n, &mut w);
    let quad: f64 = w.iter().map(|v| v * v).sum();
    let ll = -0.5 * (n as f64 * (2.0 * PI).ln() + log_det + quad);
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(Error::SingularCovariance)
    }
}

/// Simulates `(L, H)` of length `t` with zero pre-sample values.
pub fn simulate_uc(params: &UcParams, t: usize, rng: &mut StreamRng) -> (Vec<f64>, Vec<f64>) {
    let e_l = normals(rng, t);
    let e_h = normals(rng, t);
    (
        simulate_fractional(params.d, params.sigma_l, &e_l),
        simulate_ma(&params.a, params.sigma_h, &e_h),
    )
}

/// `L = S^{-1} sigma e`: `L_t = sigma e_t - sum_{k>=1} pi_k L_{t-k}`.
pub fn simulate_fractional(d: f64, sigma: f64, e: &[f64]) -> Vec<f64> {
    let t = e.len();
    let pi = fracdiff_coeffs(d, t);
    let mut l = vec![0.0; t];
    for i in 0..t {
        let s: f64 = (1..=i).map(|k| pi[k] * l[i - k]).sum();
        l[i] = sigma * e[i] - s;
    }
    l
}

/// `H_t = sigma (e_t + a_1 e_{t-1} + ... + a_p e_{t-p})` with zero pre-sample.
pub fn simulate_ma(a: &[f64], sigma: f64, e: &[f64]) -> Vec<f64> {
    (0..e.len())
        .map(|i| {
            let mut v = e[i];
            for (j, aj) in a.iter().enumerate() {
                if i > j {
                    v += aj * e[i - j - 1];
                }
            }
            sigma * v
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Objective spread over the final simplex.
    pub f_spread: f64,
    /// Largest final vertex distance in the search coordinates.
    pub step_norm: f64,
    /// Index of the winning start in the multi-start grid.
    pub start: usize,
    /// Best log-likelihood after each iteration of the winning start.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UcFit {
    pub params: UcParams,
    pub loglik: f64,
    pub decomposition: Decomposition,
    pub convergence: Convergence,
}

impl UcFit {
    /// Change of the trend over the sample, `L_T - L_1`.
    pub fn trend_change(&self) -> f64 {
        let v = &self.decomposition.low.values;
        v[v.len() - 1] - v[0]
    }
}

#[derive(Debug, Clone)]
pub struct UcFitOptions {
    pub d_starts: Vec<f64>,
    pub f_tol: f64,
    pub max_iter: usize,
}

impl Default for UcFitOptions {
    fn default() -> Self {
        Self {
            d_starts: DEFAULT_D_STARTS.to_vec(),
            f_tol: 1e-8,
            max_iter: 2000,
        }
    }
}

/// Maximum-likelihood fit of `(d, sigma_H, a_1..a_p)` with `sigma_L` fixed.
pub fn uc_fit(z: &TimeSeries, sigma_l_fixed: f64, p: usize) -> Result<UcFit> {
    uc_fit_with(z, sigma_l_fixed, p, &UcFitOptions::default())
}

pub fn uc_fit_with(z: &TimeSeries, sigma_l: f64, p: usize, opts: &UcFitOptions) -> Result<UcFit> {
    if p > 1 {
        return Err(Error::InvalidInput(format!("p must be 0 or 1, got {p}")));
    }
    if !(SIGMA_L_RANGE.0..=SIGMA_L_RANGE.1).contains(&sigma_l) {
        return Err(Error::InvalidInput(format!(
            "sigma_L = {sigma_l} outside [{}, {}]",
            SIGMA_L_RANGE.0, SIGMA_L_RANGE.1
        )));
    }
    check_input(z)?;
    let zv = &z.values;
    let unpack = |x: &[f64]| UcParams {
        d: x[0],
        sigma_l,
        sigma_h: x[1].exp(),
        a: if p == 1 {
            vec![x[2].tanh()]
        } else {
            Vec::new()
        },
    };
    let objective = |x: &[f64]| -> f64 {
        if !(x[0] > FIT_D_BOUNDS.0 && x[0] < FIT_D_BOUNDS.1) {
            return f64::INFINITY;
        }
        if x[1].abs() > 20.0 || (p == 1 && x[2].abs() > 10.0) {
            return f64::INFINITY;
        }
        match loglik_values(zv, &unpack(x)) {
            Ok(ll) => -ll,
            Err(_) => f64::INFINITY,
        }
    };

    // Start sigma_H at the sd of first differences (noise dominates them).
    let diffs: Vec<f64> = zv.windows(2).map(|w| w[1] - w[0]).collect();
    let sh0 = (sample_sd(&diffs) / 2f64.sqrt()).max(1e-3);
    let nm = NelderMeadOptions {
        f_tol: opts.f_tol,
        x_tol: 1e-6,
        max_iter: opts.max_iter,
    };
    let mut best: Option<(usize, crate::optim::Minimum)> = None;
    for (k, &d0) in opts.d_starts.iter().enumerate() {
        let mut x0 = vec![d0, sh0.ln()];
        let mut steps = vec![0.05, 0.3];
        if p == 1 {
            x0.push(0.0);
            steps.push(0.3);
        }
        let res = nelder_mead(objective, &x0, &steps, &nm);
        if !res.f.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| res.f < b.f) {
            best = Some((k, res));
        }
    }
    let (start, res) =
        best.ok_or_else(|| Error::OptimizerFailed("no start produced a finite likelihood".into()))?;
    let params = unpack(&res.x);
    let decomposition = uc_filter(z, &params)?;
    Ok(UcFit {
        loglik: -res.f,
        params,
        decomposition,
        convergence: Convergence {
            iterations: res.iterations,
            evaluations: res.evaluations,
            converged: res.converged,
            f_spread: res.f_spread,
            step_norm: res.x_spread,
            start,
            history: res.history.iter().map(|f| -f).collect(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::hp_decompose;
    use crate::rng::stream;

    #[test]
    fn fracdiff_integer_orders() {
        assert_eq!(fracdiff_coeffs(0.0, 4), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(fracdiff_coeffs(1.0, 4), vec![1.0, -1.0, 0.0, 0.0]);
        assert_eq!(fracdiff_coeffs(2.0, 5), vec![1.0, -2.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn fracdiff_two_steps() {
        let c = fracdiff_coeffs(0.4, 3);
        assert!((c[1] + 0.4).abs() < 1e-15);
        assert!((c[2] + 0.12).abs() < 1e-15);
    }

    #[test]
    fn ma_inverse_geometric() {
        assert_eq!(ma_inverse_coeffs(&[], 3).unwrap(), vec![1.0, 0.0, 0.0]);
        let b = ma_inverse_coeffs(&[0.5], 5).unwrap();
        assert_eq!(b, vec![1.0, -0.5, 0.25, -0.125, 0.0625]);
        assert!(matches!(
            ma_inverse_coeffs(&[1.2], 3),
            Err(Error::NonInvertiblePolynomial(_))
        ));
        assert!(matches!(
            ma_inverse_coeffs(&[0.0, 1.5], 3),
            Err(Error::NonInvertiblePolynomial(_))
        ));
    }

    #[test]
    fn ma_inverse_convolution_identity() {
        let a = [0.6, -0.25];
        let n = 30;
        let b = ma_inverse_coeffs(&a, n).unwrap();
        let full = [1.0, a[0], a[1]];
        for k in 0..n {
            let conv: f64 = (0..=k.min(2)).map(|j| full[j] * b[k - j]).sum();
            let target = if k == 0 { 1.0 } else { 0.0 };
            assert!((conv - target).abs() < 1e-12);
        }
    }

    #[test]
    fn diffuse_rows_by_order() {
        assert_eq!(diffuse_rows(0.0), 0);
        assert_eq!(diffuse_rows(0.4), 0);
        assert_eq!(diffuse_rows(0.6), 1);
        assert_eq!(diffuse_rows(1.0), 1);
        assert_eq!(diffuse_rows(1.49), 1);
        assert_eq!(diffuse_rows(2.0), 2);
    }

    fn sample(seed: u64, t: usize) -> TimeSeries {
        let p = UcParams::new(1.0, 0.2, 0.6, vec![0.2]).unwrap();
        let (l, h) = simulate_uc(&p, t, &mut stream(seed, 0));
        let z: Vec<f64> = l.iter().zip(&h).map(|(a, b)| a + b).collect();
        let m = z.iter().sum::<f64>() / t as f64;
        TimeSeries::from_values("sim", 1895, z.iter().map(|v| v - m).collect()).unwrap()
    }

    #[test]
    fn filter_is_additive() {
        let z = sample(1, 80);
        for (d, a) in [(0.7, vec![]), (1.0, vec![0.3]), (1.3, vec![-0.4])] {
            let p = UcParams::new(d, 0.2, 0.8, a).unwrap();
            let dec = uc_filter(&z, &p).unwrap();
            assert!(dec.additivity_error(&z) < 1e-10);
        }
    }

    #[test]
    fn vanishing_noise_returns_series() {
        let z = sample(2, 40);
        let p = UcParams::new(1.0, 0.2, 1e-9, vec![]).unwrap();
        let dec = uc_filter(&z, &p).unwrap();
        for (l, v) in dec.low.values.iter().zip(&z.values) {
            assert!((l - v).abs() < 1e-10);
        }
        assert!(dec.high.values.iter().all(|h| h.abs() < 1e-10));
    }

    #[test]
    fn d2_white_noise_is_hp() {
        let z = sample(3, 60);
        for nu in [6.25f64, 100.0, 1600.0] {
            let p = UcParams::new(2.0, 1.0, nu.sqrt(), vec![]).unwrap();
            let uc = uc_filter(&z, &p).unwrap();
            let hp = hp_decompose(&z, nu).unwrap();
            let diff = uc
                .low
                .values
                .iter()
                .zip(&hp.low.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff <= 1e-6, "nu {nu}: {diff}");
        }
    }

    #[test]
    fn white_noise_loglik() {
        let z = sample(4, 30);
        let p = UcParams::new(0.0, 0.3, 0.5, vec![]).unwrap();
        let ll = uc_loglik(&z, &p).unwrap();
        let v = 0.3f64.powi(2) + 0.5f64.powi(2);
        let iid: f64 = z
            .values
            .iter()
            .map(|x| -0.5 * ((2.0 * PI * v).ln() + x * x / v))
            .sum();
        assert!((ll - iid).abs() < 1e-10);
    }

    #[test]
    fn loglik_matches_dense_covariance() {
        let z = sample(5, 25);
        let p = UcParams::new(1.2, 0.2, 0.7, vec![0.3]).unwrap();
        let t = z.len();
        let m = diffuse_rows(p.d);
        let s = lower_toeplitz(&fracdiff_coeffs(p.d, t))
            .rows(m, t - m)
            .into_owned();
        let binv = lower_toeplitz(&{
            let mut a = vec![0.0; t];
            a[0] = 1.0;
            a[1] = 0.3;
            a
        });
        let sb = &s * &binv;
        let cov = DMatrix::identity(t - m, t - m) * 0.04 + (&sb * sb.transpose()) * 0.49;
        let w = &s * DVector::from_column_slice(&z.values);
        let chol = cov.clone().cholesky().unwrap();
        let quad = w.dot(&chol.solve(&w));
        let ld: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let dense = -0.5 * ((t - m) as f64 * (2.0 * PI).ln() + ld + quad);
        assert!((uc_loglik(&z, &p).unwrap() - dense).abs() < 1e-9);
    }

    #[test]
    fn loglik_ignores_unit_label() {
        let z = sample(6, 40);
        let mut z2 = z.clone();
        z2.unit_id = "renamed".into();
        let p = UcParams::new(1.0, 0.2, 0.6, vec![0.2]).unwrap();
        assert_eq!(uc_loglik(&z, &p).unwrap(), uc_loglik(&z2, &p).unwrap());
    }

    #[test]
    fn fit_history_is_monotone() {
        let z = sample(7, 129);
        let opts = UcFitOptions {
            d_starts: vec![1.1],
            ..Default::default()
        };
        let fit = uc_fit_with(&z, 0.2, 1, &opts).unwrap();
        let h = &fit.convergence.history;
        assert!(h.windows(2).all(|w| w[1] >= w[0]));
        assert!(fit.loglik.is_finite());
        assert!(fit.params.d > 0.51 && fit.params.d < 1.49);
        assert!(fit.decomposition.additivity_error(&z) < 1e-10);
    }

    #[test]
    fn fit_rejects_bad_arguments() {
        let z = sample(8, 30);
        assert!(uc_fit(&z, 0.9, 1).is_err());
        assert!(uc_fit(&z, 0.2, 2).is_err());
        let short = TimeSeries::from_values("s", 1, vec![0.0; 5]).unwrap();
        assert!(matches!(
            uc_filter(&short, &UcParams::new(1.0, 0.2, 0.5, vec![]).unwrap()),
            Err(Error::SampleTooShort { .. })
        ));
    }
}
