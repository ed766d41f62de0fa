//! Single-unit time-series regressions and the cross-unit density of their
//! slope estimates.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{default_nw_bandwidth, newey_west_covariance, normal_critical};
use crate::linalg::{gram_inverse, median, quantile_sorted};
use crate::series::TimeSeries;

pub const MIN_T: usize = 20;
pub const DENSITY_GRID: usize = 512;
pub const MIN_ESTIMATES: usize = 5;

#[derive(Debug, Clone)]
pub struct TsOptions {
    /// Leads and lags of the first difference of the low-frequency regressor
    /// (dynamic OLS). Zero disables them.
    pub dols: usize,
    /// Newey-West bandwidth; `None` uses `floor(0.75 T^{1/3})`.
    pub bandwidth: Option<usize>,
    pub level: f64,
}

impl Default for TsOptions {
    fn default() -> Self {
        Self {
            dols: 0,
            bandwidth: None,
            level: 0.90,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TsEstimate {
    pub unit_id: String,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Newey-West standard errors.
    pub se: Vec<f64>,
    pub level: f64,
    pub ci: Vec<(f64, f64)>,
    pub bandwidth: usize,
    pub nobs: usize,
    pub years: Vec<i32>,
    pub residuals: Vec<f64>,
    pub r2: f64,
    pub durbin_watson: f64,
}

impl TsEstimate {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.coefficients[k])
    }

    pub fn t_stat(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.coefficients[k] / self.se[k])
    }
}

fn check_axis(a: &TimeSeries, b: &TimeSeries) -> Result<()> {
    if a.years != b.years {
        return Err(Error::AxisMismatch(format!(
            "{} covers {}..{}, {} covers {}..{}",
            a.unit_id,
            a.years.first().copied().unwrap_or_default(),
            a.years.last().copied().unwrap_or_default(),
            b.unit_id,
            b.years.first().copied().unwrap_or_default(),
            b.years.last().copied().unwrap_or_default(),
        )));
    }
    Ok(())
}

/// `dY_t = beta_0 + beta_L L_t (+ beta_H H_t) + u_t` by OLS with a Newey-West
/// 90% interval.
pub fn ts_estimate(
    dy: &TimeSeries,
    lx: &TimeSeries,
    hx: Option<&TimeSeries>,
) -> Result<TsEstimate> {
    ts_estimate_with(dy, lx, hx, &TsOptions::default())
}

pub fn ts_estimate_with(
    dy: &TimeSeries,
    lx: &TimeSeries,
    hx: Option<&TimeSeries>,
    opts: &TsOptions,
) -> Result<TsEstimate> {
    check_axis(dy, lx)?;
    if let Some(h) = hx {
        check_axis(dy, h)?;
    }
    let t_all = dy.len();
    let k = opts.dols;
    // rows kept: s in [k + 1, T - k) when leads/lags are used
    let (start, end) = if k > 0 {
        (k + 1, t_all.saturating_sub(k))
    } else {
        (0, t_all)
    };
    let t = end.saturating_sub(start);
    if t < MIN_T {
        return Err(Error::SampleTooShort {
            t,
            needed: MIN_T + if k > 0 { 2 * k + 1 } else { 0 },
        });
    }
    let mut names = vec!["const".to_string(), "beta_L".to_string()];
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; t], lx.values[start..end].to_vec()];
    if let Some(h) = hx {
        names.push("beta_H".into());
        cols.push(h.values[start..end].to_vec());
    }
    if k > 0 {
        let dl = |s: usize| lx.values[s] - lx.values[s - 1];
        for j in -(k as isize)..=(k as isize) {
            names.push(format!("dL[{j:+}]"));
            cols.push(
                (start..end)
                    .map(|s| dl((s as isize + j) as usize))
                    .collect(),
            );
        }
    }
    let x = DMatrix::from_fn(t, cols.len(), |s, c| cols[c][s]);
    let y = DVector::from_column_slice(&dy.values[start..end]);
    let bread = gram_inverse(&x)?;
    let beta = &bread * x.tr_mul(&y);
    let resid: Vec<f64> = (&y - &x * &beta).iter().copied().collect();
    let bandwidth = opts.bandwidth.unwrap_or_else(|| default_nw_bandwidth(t));
    let v = newey_west_covariance(&x, &resid, bandwidth)?;
    let se: Vec<f64> = (0..beta.len()).map(|j| v[(j, j)].max(0.0).sqrt()).collect();
    let z = normal_critical(opts.level);
    let ybar = y.mean();
    let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let ssr: f64 = resid.iter().map(|u| u * u).sum();
    let dw = if ssr > 0.0 {
        resid.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / ssr
    } else {
        f64::NAN
    };
    Ok(TsEstimate {
        unit_id: dy.unit_id.clone(),
        names,
        ci: beta
            .iter()
            .zip(&se)
            .map(|(b, s)| (b - z * s, b + z * s))
            .collect(),
        coefficients: beta.iter().copied().collect(),
        se,
        level: opts.level,
        bandwidth,
        nobs: t,
        years: dy.years[start..end].to_vec(),
        residuals: resid,
        r2: if tss > 0.0 { 1.0 - ssr / tss } else { 0.0 },
        durbin_watson: dw,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct UnitDensity {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    pub median: f64,
    pub mode: f64,
    pub weighted_mean: f64,
    /// All estimates are equal; the curve is a single point.
    pub degenerate: bool,
}

/// Silverman's rule `0.9 min(sd, IQR / 1.34) n^{-1/5}`, falling back to the
/// standard deviation when the interquartile range is zero.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian kernel density of per-unit estimates with median, mode (argmax
/// on the grid) and weighted mean.
pub fn unit_density(estimates: &[f64], weights: Option<&[f64]>) -> Result<UnitDensity> {
    if estimates.len() < MIN_ESTIMATES {
        return Err(Error::TooFewEstimates {
            needed: MIN_ESTIMATES,
            got: estimates.len(),
        });
    }
    if estimates.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("estimates must be finite".into()));
    }
    let weighted_mean = match weights {
        Some(w) => {
            if w.len() != estimates.len() || w.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidInput(
                    "weights must be non-negative, one per estimate".into(),
                ));
            }
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return Err(Error::InvalidInput("weights sum to zero".into()));
            }
            estimates.iter().zip(w).map(|(e, w)| e * w).sum::<f64>() / total
        }
        None => estimates.iter().sum::<f64>() / estimates.len() as f64,
    };
    let med = median(estimates);
    let bw = silverman_bandwidth(estimates);
    if !(bw > 0.0) {
        let c = estimates[0];
        return Ok(UnitDensity {
            grid: vec![c],
            density: vec![1.0],
            bandwidth: 0.0,
            median: c,
            mode: c,
            weighted_mean: c,
            degenerate: true,
        });
    }
    let lo = estimates.iter().cloned().fold(f64::INFINITY, f64::min) - 3.0 * bw;
    let hi = estimates.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bw;
    let step = (hi - lo) / (DENSITY_GRID - 1) as f64;
    let norm = 1.0 / (estimates.len() as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    let grid: Vec<f64> = (0..DENSITY_GRID).map(|g| lo + step * g as f64).collect();
    let density: Vec<f64> = grid
        .iter()
        .map(|x| {
            estimates
                .iter()
                .map(|e| (-0.5 * ((x - e) / bw).powi(2)).exp())
                .sum::<f64>()
                * norm
        })
        .collect();
    let arg = density
        .iter()
        .enumerate()
        .fold(0, |best, (g, d)| if *d > density[best] { g } else { best });
    Ok(UnitDensity {
        mode: grid[arg],
        grid,
        density,
        bandwidth: bw,
        median: med,
        weighted_mean,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::mw::mw_decompose;
    use crate::rng::{normals, stream};

    fn series(seed: u64, t: usize) -> TimeSeries {
        TimeSeries::from_values("s", 1960, normals(&mut stream(seed, 0), t)).unwrap()
    }

    #[test]
    fn fwl_and_orthogonal_high_component() {
        let x = series(71, 60);
        let dy = series(72, 60);
        let dec = mw_decompose(&x, 4).unwrap();
        let a = ts_estimate(&dy, &dec.low, None).unwrap();
        let low_dy = mw_decompose(&dy, 4).unwrap().low;
        let b = ts_estimate(&low_dy, &dec.low, None).unwrap();
        assert!((a.coefficient("beta_L").unwrap() - b.coefficient("beta_L").unwrap()).abs() < 1e-8);
        let c = ts_estimate(&dy, &dec.low, Some(&dec.high)).unwrap();
        assert!((a.coefficient("beta_L").unwrap() - c.coefficient("beta_L").unwrap()).abs() < 1e-8);
    }

    #[test]
    fn interval_uses_hac_se() {
        let x = series(73, 80);
        let dy = TimeSeries::from_values(
            "y",
            1960,
            x.values
                .iter()
                .zip(&series(74, 80).values)
                .map(|(a, e)| 1.0 - 0.5 * a + e)
                .collect(),
        )
        .unwrap();
        let e = ts_estimate(&dy, &x, None).unwrap();
        let (lo, hi) = e.ci[1];
        assert!((hi - lo - 2.0 * 1.6448536269514722 * e.se[1]).abs() < 1e-9);
        assert!(lo < -0.5 && -0.5 < hi);
        assert_eq!(e.bandwidth, 3);
    }

    #[test]
    fn axis_mismatch_and_short_samples() {
        let a = series(75, 30);
        let b = TimeSeries::from_values("b", 1961, vec![0.0; 30]).unwrap();
        assert!(matches!(
            ts_estimate(&a, &b, None),
            Err(Error::AxisMismatch(_))
        ));
        let s = series(76, 15);
        assert!(matches!(
            ts_estimate(&s, &s, None),
            Err(Error::SampleTooShort { .. })
        ));
    }

    #[test]
    fn dols_adds_leads_and_lags() {
        let x = series(77, 60);
        let dy = series(78, 60);
        let e = ts_estimate_with(
            &dy,
            &x,
            None,
            &TsOptions {
                dols: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(e.names.len(), 2 + 5);
        assert_eq!(e.nobs, 60 - 3 - 2);
    }

    #[test]
    fn density_summaries() {
        let d = unit_density(&[0.3; 6], None).unwrap();
        assert!(d.degenerate && d.mode == 0.3 && d.median == 0.3 && d.weighted_mean == 0.3);
        assert!(matches!(
            unit_density(&[1.0, 2.0], None),
            Err(Error::TooFewEstimates { .. })
        ));
        let v = [-1.0, -0.6, -0.5, -0.45, -0.4, 0.2, 0.9];
        let w = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 4.0];
        let d = unit_density(&v, Some(&w)).unwrap();
        assert_eq!(d.grid.len(), DENSITY_GRID);
        assert!((d.median + 0.45).abs() < 1e-15);
        assert!((d.weighted_mean - (v.iter().sum::<f64>() + 3.0 * 0.9) / 10.0).abs() < 1e-12);
        assert!(d.mode > -0.7 && d.mode < -0.2);
        // integrates to one
        let step = d.grid[1] - d.grid[0];
        let area: f64 = d.density.iter().sum::<f64>() * step;
        assert!((area - 1.0).abs() < 1e-3);
    }
}
