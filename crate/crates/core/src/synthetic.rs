//! Seeded generator for a state-level temperature and output panel with a
//! known low/high-frequency structure. Used for the bundled sample data,
//! the default simulation calibrations and tests.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fracuc::simulate_fractional;
use crate::ingest::{build_growth, STATE_CODES};
use crate::rng::{normals, stream, subseed};
use crate::series::Panel;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub first_year: i32,
    pub last_year: i32,
    /// First year of output growth (levels start one year earlier).
    pub growth_first_year: i32,
    pub cutoff: i32,
    /// Memory of the common low-frequency temperature component.
    pub d: f64,
    /// Innovation sd of the common low-frequency component (deg F).
    pub sigma_l: f64,
    /// Innovation sd of each state's own low-frequency component.
    pub sigma_l_idio: f64,
    /// Warming per year after 1975 (deg F).
    pub trend: f64,
    /// sd of the common high-frequency component.
    pub sigma_h: f64,
    pub ar_h: f64,
    /// Typical sd of each state's own high-frequency component.
    pub sigma_v: f64,
    pub alpha: f64,
    pub beta_l: f64,
    pub beta_h: f64,
    /// sd of the growth factor `F_t`.
    pub factor_sd: f64,
    pub noise_sd: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 1895,
            first_year: 1895,
            last_year: 2023,
            growth_first_year: 1964,
            cutoff: 1980,
            d: 1.0,
            sigma_l: 0.2,
            sigma_l_idio: 0.3,
            trend: 0.035,
            sigma_h: 0.9,
            ar_h: 0.2,
            sigma_v: 0.9,
            alpha: 0.15,
            beta_l: -0.5,
            beta_h: -0.1,
            factor_sd: 1.2,
            noise_sd: 1.5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SyntheticData {
    /// Annual average temperature (deg F), `first_year..=last_year`.
    pub temperature: Panel,
    /// True low-frequency part of temperature (same axes).
    pub low: Panel,
    /// True high-frequency part.
    pub high: Panel,
    /// Real output levels, `growth_first_year - 1..=last_year`.
    pub output: Panel,
    /// `100 * dlog(output)`.
    pub growth: Panel,
    /// Population shares.
    pub weights: Vec<f64>,
}

/// Contiguous-state panel with
/// `X_it = mu_i + lambda_i G_t + l_it + kappa_i h_t + v_it` and
/// `dY_it = gamma_i + alpha dY_i,t-1 + beta_L L_it + beta_H H_it + phi_i F_t + u_it`,
/// where `L` is demeaned before the cutoff.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    let n = STATE_CODES.len();
    let years: Vec<i32> = (cfg.first_year..=cfg.last_year).collect();
    let t = years.len();
    let draw = |tag: u64, len: usize| normals(&mut stream(subseed(cfg.seed, tag), 0), len);
    let unit = |tag: u64, k: usize| normals(&mut stream(subseed(cfg.seed, tag), k as u64 + 1), t);

    let common_low: Vec<f64> = simulate_fractional(cfg.d, cfg.sigma_l, &draw(1, t))
        .iter()
        .zip(&years)
        .map(|(g, y)| g + cfg.trend * (y - 1975).max(0) as f64)
        .collect();
    let eh = draw(2, t);
    let mut common_high = vec![0.0; t];
    for s in 0..t {
        let prev = if s > 0 { common_high[s - 1] } else { 0.0 };
        common_high[s] = cfg.ar_h * prev + cfg.sigma_h * (1.0 - cfg.ar_h * cfg.ar_h).sqrt() * eh[s];
    }
    let z = draw(3, 6 * n);
    let mu: Vec<f64> = (0..n).map(|i| 52.0 + 8.0 * z[i]).collect();
    let lam_l: Vec<f64> = (0..n).map(|i| 1.0 + 0.25 * z[n + i]).collect();
    let lam_h: Vec<f64> = (0..n).map(|i| 1.0 + 0.3 * z[2 * n + i]).collect();
    let sd_v: Vec<f64> = (0..n)
        .map(|i| cfg.sigma_v * (0.25 * z[3 * n + i]).exp())
        .collect();

    let mut low = DMatrix::zeros(n, t);
    let mut high = DMatrix::zeros(n, t);
    for i in 0..n {
        let idio = simulate_fractional(cfg.d, cfg.sigma_l_idio, &unit(4, i));
        let v = unit(5, i);
        for s in 0..t {
            low[(i, s)] = mu[i] + lam_l[i] * common_low[s] + idio[s];
            high[(i, s)] = lam_h[i] * common_high[s] + sd_v[i] * v[s];
        }
    }
    let ids: Vec<String> = STATE_CODES.iter().map(|s| s.to_string()).collect();
    let weights: Vec<f64> = {
        let raw: Vec<f64> = (0..n).map(|i| (1.0 * z[4 * n + i]).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|v| v / total).collect()
    };
    let temperature = Panel::new(ids.clone(), years.clone(), &low + &high)?
        .with_label("degF")
        .with_weights(weights.clone())?;
    let low_p = temperature.with_values(low.clone());
    let high_p = temperature.with_values(high.clone());

    // growth on the later window
    let g0 = (cfg.growth_first_year - cfg.first_year) as usize;
    let tg = t - g0;
    let pre = (cfg.cutoff - cfg.first_year) as usize;
    let gamma: Vec<f64> = (0..n).map(|i| 1.8 + 0.5 * z[5 * n + i]).collect();
    let phi: Vec<f64> = {
        let w = draw(6, n);
        (0..n).map(|i| 1.0 + 0.4 * w[i]).collect()
    };
    let f: Vec<f64> = draw(7, tg).iter().map(|v| cfg.factor_sd * v).collect();
    let mut dy = DMatrix::zeros(n, tg);
    let mut levels = DMatrix::zeros(n, tg + 1);
    let start = draw(8, n);
    for i in 0..n {
        let base = low.row(i).columns(0, pre).sum() / pre as f64;
        let u = unit(9, i);
        let mut prev = gamma[i] / (1.0 - cfg.alpha);
        levels[(i, 0)] = 100.0 * (0.5 * start[i]).exp();
        for s in 0..tg {
            let k = g0 + s;
            let v = gamma[i]
                + cfg.alpha * prev
                + cfg.beta_l * (low[(i, k)] - base)
                + cfg.beta_h * high[(i, k)]
                + phi[i] * f[s]
                + cfg.noise_sd * u[s];
            dy[(i, s)] = v;
            levels[(i, s + 1)] = levels[(i, s)] * (v / 100.0).exp();
            prev = v;
        }
    }
    let output = Panel::new(
        ids,
        (cfg.growth_first_year - 1..=cfg.last_year).collect(),
        levels,
    )?
    .with_label("real output")
    .with_weights(weights.clone())?;
    let growth = build_growth(&output)?;
    Ok(SyntheticData {
        temperature,
        low: low_p,
        high: high_p,
        output,
        growth,
        weights,
    })
}

/// Monthly deviations from the annual mean (sum to zero).
const SEASONAL: [f64; 12] = [
    -19.5, -16.25, -8.5, 0.75, 9.5, 17.0, 20.75, 19.25, 12.5, 2.25, -8.75, -29.0,
];

/// Division-layout nClimDiv text for a state panel (one division per state,
/// monthly values spread around the annual value rounded to 0.01).
pub fn to_nclimdiv(temperature: &Panel) -> String {
    let mut s = String::new();
    for i in 0..temperature.n() {
        let code = STATE_CODES
            .iter()
            .position(|c| *c == temperature.unit_ids[i])
            .map(|k| k + 1)
            .unwrap_or(99);
        for (k, y) in temperature.years.iter().enumerate() {
            let annual = (temperature.values[(i, k)] * 100.0).round() / 100.0;
            let _ = write!(s, "{code:02}01{:02}{y:04}", crate::ingest::AVG_TEMPERATURE);
            for off in SEASONAL {
                let _ = write!(s, "{:7.2}", annual + off);
            }
            s.push('\n');
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_nclimdiv;

    #[test]
    fn shapes_and_determinism() {
        let a = generate(&SyntheticConfig::default()).unwrap();
        let b = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(a.temperature.values, b.temperature.values);
        assert_eq!((a.temperature.n(), a.temperature.t()), (48, 129));
        assert_eq!((a.growth.n(), a.growth.t()), (48, 60));
        assert_eq!(a.growth.years[0], 1964);
        assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let sum = &a.low.values + &a.high.values;
        assert!((sum - &a.temperature.values).amax() < 1e-12);
    }

    #[test]
    fn nclimdiv_round_trip() {
        assert!(SEASONAL.iter().sum::<f64>().abs() < 1e-12);
        let d = generate(&SyntheticConfig::default()).unwrap();
        let text = to_nclimdiv(&d.temperature);
        let (p, report) = parse_nclimdiv(text.as_bytes(), None).unwrap();
        assert_eq!(p.unit_ids, d.temperature.unit_ids);
        assert!(report.rejected.is_empty());
        assert!((&p.values - &d.temperature.values).amax() <= 0.005 + 1e-9);
    }
}
