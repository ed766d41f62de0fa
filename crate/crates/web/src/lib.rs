//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes plain numbers or arrays and returns a JSON string.
//! The `*_json` functions hold the logic and are usable natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use lowfreq::filters::{default_q, BhpStopping, FilterConfig};
use lowfreq::fracuc::{simulate_uc, uc_filter, UcParams};
use lowfreq::rng::stream;
use lowfreq::series::{autocorrelation_values, null_band};
use lowfreq::synthetic::{generate, SyntheticConfig};
use lowfreq::{Result, TimeSeries};

#[derive(Serialize)]
struct Split {
    label: String,
    years: Vec<i32>,
    value: Vec<f64>,
    low: Vec<f64>,
    high: Vec<f64>,
}

#[derive(Serialize)]
struct Comparison {
    years: Vec<i32>,
    observed: Vec<f64>,
    truth: Vec<f64>,
    uc: Vec<f64>,
    hp: Vec<f64>,
    rmse_uc: f64,
    rmse_hp: f64,
    nu: f64,
}

#[derive(Serialize)]
struct Correlogram {
    lags: Vec<usize>,
    acf: Vec<f64>,
    band: f64,
}

#[derive(Serialize)]
struct Sample {
    unit: String,
    first_year: i32,
    values: Vec<f64>,
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

fn filter(method: &str, param: f64, t: usize) -> Result<FilterConfig> {
    let whole = |p: f64| (p.is_finite() && p >= 1.0).then(|| p.round() as usize);
    Ok(match method {
        "mw" => FilterConfig::Mw {
            q: whole(param).unwrap_or_else(|| default_q(t)),
        },
        "hp" => FilterConfig::Hp {
            lambda: if param > 0.0 { param } else { 100.0 },
        },
        "bhp" => FilterConfig::Bhp {
            lambda: 1600.0,
            stopping: whole(param)
                .map(BhpStopping::Fixed)
                .unwrap_or(BhpStopping::InformationCriterion),
        },
        "jh" => FilterConfig::Jh {
            p: 1,
            h: whole(param).unwrap_or(2),
        },
        other => {
            return Err(lowfreq::Error::InvalidInput(format!(
                "unknown method {other}"
            )))
        }
    })
}

/// Splits `values` (annual, starting at `first_year`) into low and high
/// frequency parts. `param` is q for MW, lambda for HP, the fixed number
/// of boosting passes for bHP and the horizon for JH; 0 picks the default.
pub fn decompose_json(values: &[f64], first_year: i32, method: &str, param: f64) -> Result<String> {
    let z = TimeSeries::from_values("input", first_year, values.to_vec())?;
    let cfg = filter(method, param, z.len())?;
    let d = cfg.decompose(&z)?;
    let off = d.undefined_prefix(&z);
    Ok(to_json(&Split {
        label: d.method.label(),
        years: d.low.years.clone(),
        value: z.values[off..].to_vec(),
        low: d.low.values,
        high: d.high.values,
    }))
}

/// Simulates the fractional components model and compares the model-based
/// low-frequency estimate with HP(`lambda`) against the true path.
pub fn uc_vs_hp_json(
    d: f64,
    sigma_h: f64,
    a1: f64,
    t: usize,
    lambda: f64,
    seed: u64,
) -> Result<String> {
    let params = UcParams::new(d, 0.2, sigma_h, vec![a1])?;
    let (low, high) = simulate_uc(&params, t, &mut stream(seed, 0));
    let z: Vec<f64> = low.iter().zip(&high).map(|(l, h)| l + h).collect();
    let series = TimeSeries::from_values("sim", 1, z.clone())?;
    let uc = uc_filter(&series, &params)?;
    let hp = FilterConfig::Hp { lambda }.decompose(&series)?;
    let off = uc.undefined_prefix(&series);
    let rmse = |est: &[f64]| {
        let e: f64 = est
            .iter()
            .zip(&low[off..])
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        (e / est.len() as f64).sqrt()
    };
    let hp_low = hp.low.values[off..].to_vec();
    Ok(to_json(&Comparison {
        years: uc.low.years.clone(),
        observed: z[off..].to_vec(),
        truth: low[off..].to_vec(),
        rmse_uc: rmse(&uc.low.values),
        rmse_hp: rmse(&hp_low),
        uc: uc.low.values,
        hp: hp_low,
        nu: params.nu(),
    }))
}

/// Sample autocorrelations at lags `1..=max_lag` with the +-1/sqrt(T) band.
pub fn correlogram_json(values: &[f64], max_lag: usize) -> Result<String> {
    let acf = autocorrelation_values(values, max_lag)?;
    Ok(to_json(&Correlogram {
        lags: (1..=acf.len()).collect(),
        acf,
        band: null_band(values.len()),
    }))
}

/// One state's synthetic annual temperature, for seeding the page.
pub fn sample_series_json(seed: u64, unit: usize) -> Result<String> {
    let data = generate(&SyntheticConfig {
        seed,
        ..Default::default()
    })?;
    let p = &data.temperature;
    let s = p.series(unit % p.n());
    Ok(to_json(&Sample {
        unit: s.unit_id.clone(),
        first_year: s.first_year(),
        values: s.values,
    }))
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn decompose(
    values: &[f64],
    first_year: i32,
    method: &str,
    param: f64,
) -> std::result::Result<String, JsError> {
    js(decompose_json(values, first_year, method, param))
}

#[wasm_bindgen(js_name = ucVsHp)]
pub fn uc_vs_hp(
    d: f64,
    sigma_h: f64,
    a1: f64,
    t: usize,
    lambda: f64,
    seed: u64,
) -> std::result::Result<String, JsError> {
    js(uc_vs_hp_json(d, sigma_h, a1, t, lambda, seed))
}

#[wasm_bindgen]
pub fn correlogram(values: &[f64], max_lag: usize) -> std::result::Result<String, JsError> {
    js(correlogram_json(values, max_lag))
}

#[wasm_bindgen(js_name = sampleSeries)]
pub fn sample_series(seed: u64, unit: usize) -> std::result::Result<String, JsError> {
    js(sample_series_json(seed, unit))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn unknown_method_is_rejected() {
        assert!(decompose_json(&[1.0; 40], 1900, "kalman", 0.0).is_err());
    }

    #[test]
    fn zero_param_selects_defaults() {
        let v: Vec<f64> = (0..64).map(|t| (t as f64 * 0.3).sin()).collect();
        assert_eq!(
            parse(&decompose_json(&v, 1950, "mw", 0.0).unwrap())["label"],
            "MW4"
        );
        assert_eq!(
            parse(&decompose_json(&v, 1950, "hp", 0.0).unwrap())["label"],
            "HP(100)"
        );
    }

    #[test]
    fn correlogram_band_matches_length() {
        let v: Vec<f64> = (0..100).map(|t| ((t * 7919) % 13) as f64).collect();
        let c = parse(&correlogram_json(&v, 5).unwrap());
        assert_eq!(c["lags"].as_array().unwrap().len(), 5);
        assert!((c["band"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    }
}
