//! Simulation studies: accuracy of the trend filters on calibrated state
//! temperature processes, and bias and interval coverage of the dynamic
//! panel estimators.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::hp::BhpStopping;
use crate::filters::mw::MwBasis;
use crate::filters::FilterConfig;
use crate::fracuc::{simulate_ma, simulate_uc, uc_filter, uc_fit, UcParams};
use crate::inference::{
    bootstrap_prepared, cluster_se_oneway, cluster_se_twoway, BootstrapOptions, Resampling,
};
use crate::linalg::{sample_sd, sym_eigen_desc};
use crate::panel::{estimate, FittedHeterogeneity, Heterogeneity, PanelSpec};
use crate::par::map_indices;
use crate::rng::{normals, stream, subseed, StreamRng};
use crate::series::{Panel, TimeSeries};
use crate::synthetic::{generate, SyntheticConfig};

/// States whose fitted parameters drive the filter study.
pub const FILTER_STATES: [&str; 7] = ["CA", "FL", "IL", "MA", "ND", "NY", "WA"];
pub const PANEL_N: usize = 48;
pub const PANEL_T: usize = 60;
pub const ENSO_Q: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McDesign {
    FilterRmse,
    PanelFe,
    PanelIfe,
}

/// Regressors used by the panel study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentMode {
    /// MW(q) split of the simulated temperature.
    Estimated,
    /// The simulated components themselves.
    True,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub design: McDesign,
    pub replications: usize,
    pub seed: u64,
    pub sigma_l: f64,
    /// MW q for the panel regressors.
    pub q: usize,
    /// MW q values compared in the filter study.
    pub filter_qs: Vec<usize>,
    pub hp_lambdas: Vec<f64>,
    pub boot_b: usize,
    pub level: f64,
    pub components: ComponentMode,
    /// Scale of the simulated regression errors (0 gives noiseless data).
    pub noise_scale: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            design: McDesign::PanelIfe,
            replications: 200,
            seed: 0,
            sigma_l: 0.2,
            q: 4,
            filter_qs: vec![8, 16],
            hp_lambdas: vec![100.0, 6.25],
            boot_b: 199,
            level: 0.90,
            components: ComponentMode::Estimated,
            noise_scale: 1.0,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidInput("replications must be >= 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidInput(format!(
                "level {} outside (0, 1)",
                self.level
            )));
        }
        if !(self.sigma_l > 0.0) {
            return Err(Error::InvalidInput("sigma_L must be positive".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// filter accuracy

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateCalibration {
    pub state: String,
    pub params: UcParams,
    /// Fitted trend held fixed across replications.
    pub low: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterCalibration {
    pub first_year: i32,
    pub states: Vec<StateCalibration>,
}

/// Illustrative parameter values for the seven states, `(state, d, sigma_H, a_1)`.
const BUILTIN_STATES: [(&str, f64, f64, f64); 7] = [
    ("CA", 1.02, 0.85, 0.12),
    ("FL", 0.95, 0.75, 0.18),
    ("IL", 1.08, 1.30, 0.10),
    ("MA", 1.00, 1.00, 0.14),
    ("ND", 1.12, 1.55, 0.11),
    ("NY", 1.05, 1.05, 0.15),
    ("WA", 0.98, 1.02, 0.16),
];

impl FilterCalibration {
    /// Fits the UC model with `sigma_L` fixed to each of the seven states.
    pub fn from_panel(temperature: &Panel, sigma_l: f64) -> Result<Self> {
        let states = FILTER_STATES
            .iter()
            .map(|s| {
                let i = temperature
                    .unit_index(s)
                    .ok_or_else(|| Error::MissingCalibration(format!("state {s} not in panel")))?;
                let series = temperature.series(i);
                let mean = series.mean();
                let z = series.with_values(series.values.iter().map(|v| v - mean).collect());
                let fit = uc_fit(&z, sigma_l, 1)?;
                Ok(StateCalibration {
                    state: s.to_string(),
                    params: fit.params,
                    low: fit.decomposition.low.values,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            first_year: temperature.years[0],
            states,
        })
    }

    /// Seven illustrative states: each trend is the UC smoother applied to
    /// one seeded draw from the state's model.
    pub fn builtin(sigma_l: f64, t: usize) -> Result<Self> {
        let states = BUILTIN_STATES
            .iter()
            .enumerate()
            .map(|(k, (s, d, sh, a))| {
                let params = UcParams::new(*d, sigma_l, *sh, vec![*a])?;
                let mut rng = stream(subseed(7, k as u64), 0);
                let (l, h) = simulate_uc(&params, t, &mut rng);
                let x: Vec<f64> = l.iter().zip(&h).map(|(a, b)| a + b).collect();
                let mean = x.iter().sum::<f64>() / t as f64;
                let z = TimeSeries::from_values(*s, 1895, x.iter().map(|v| v - mean).collect())?;
                let low = uc_filter(&z, &params)?.low.values;
                Ok(StateCalibration {
                    state: s.to_string(),
                    params,
                    low,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            first_year: 1895,
            states,
        })
    }

    fn validate(&self) -> Result<()> {
        for s in FILTER_STATES {
            if !self.states.iter().any(|c| c.state == s) {
                return Err(Error::MissingCalibration(format!("no parameters for {s}")));
            }
        }
        let t = self.states[0].low.len();
        if self.states.iter().any(|s| s.low.len() != t) {
            return Err(Error::MissingCalibration(
                "trend paths differ in length".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterCell {
    pub state: String,
    pub filter: String,
    pub sigma_h: f64,
    /// Time-averaged squared bias of the trend estimate.
    pub bias2: f64,
    /// Time-averaged variance across replications (divisor R).
    pub variance: f64,
    /// `sqrt(bias2 + variance)`
    pub rmse: f64,
    /// Years over which the filter is defined.
    pub span: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterReport {
    pub replications: usize,
    pub seed: u64,
    pub sigma_l: f64,
    pub filters: Vec<String>,
    pub cells: Vec<FilterCell>,
}

impl FilterReport {
    pub fn cell(&self, state: &str, filter: &str) -> Option<&FilterCell> {
        self.cells
            .iter()
            .find(|c| c.state == state && c.filter == filter)
    }

    /// RMSE by state for one filter, in calibration order.
    pub fn column(&self, filter: &str) -> Vec<(String, f64, f64)> {
        self.cells
            .iter()
            .filter(|c| c.filter == filter)
            .map(|c| (c.state.clone(), c.sigma_h, c.rmse))
            .collect()
    }
}

fn filter_set(cfg: &McConfig) -> Vec<FilterConfig> {
    let mut out: Vec<FilterConfig> = cfg
        .filter_qs
        .iter()
        .map(|&q| FilterConfig::Mw { q })
        .collect();
    out.extend(
        cfg.hp_lambdas
            .iter()
            .map(|&lambda| FilterConfig::Hp { lambda }),
    );
    out.push(FilterConfig::Bhp {
        lambda: 1600.0,
        stopping: BhpStopping::InformationCriterion,
    });
    out.push(FilterConfig::Jh { p: 1, h: 2 });
    out
}

/// Offset of the first defined year and the low-frequency errors of one
/// filter on one simulated state, indexed per replication as [state][filter].
type FilterErrors = (usize, Vec<f64>);

/// Holds each state's trend at its fitted path, redraws the high-frequency
/// component from the fitted MA model, and scores every filter's trend
/// estimate against the fixed path.
pub fn mc_filter_rmse(cfg: &McConfig, cal: &FilterCalibration) -> Result<FilterReport> {
    cfg.validate()?;
    cal.validate()?;
    let filters = filter_set(cfg);
    for f in &filters {
        f.validate()?;
    }
    let t = cal.states[0].low.len();
    let labels: Vec<String> = filters.iter().map(|f| f.label()).collect();
    let reps: Vec<Result<Vec<Vec<FilterErrors>>>> = map_indices(cfg.replications, |r| {
        cal.states
            .iter()
            .enumerate()
            .map(|(k, sc)| {
                let mut rng = stream(subseed(cfg.seed, k as u64), r as u64);
                let e = normals(&mut rng, t);
                let h = simulate_ma(&sc.params.a, sc.params.sigma_h, &e);
                let x: Vec<f64> = sc.low.iter().zip(&h).map(|(l, h)| l + h).collect();
                let z = TimeSeries::from_values(sc.state.clone(), cal.first_year, x)?;
                filters
                    .iter()
                    .map(|f| {
                        let d = f.decompose(&z)?;
                        let off = d.undefined_prefix(&z);
                        let err = d
                            .low
                            .values
                            .iter()
                            .zip(&sc.low[off..])
                            .map(|(a, b)| a - b)
                            .collect();
                        Ok((off, err))
                    })
                    .collect()
            })
            .collect()
    });
    let reps: Vec<Vec<Vec<FilterErrors>>> = reps.into_iter().collect::<Result<_>>()?;
    let rf = cfg.replications as f64;
    let mut cells = Vec::new();
    for (k, sc) in cal.states.iter().enumerate() {
        for (j, label) in labels.iter().enumerate() {
            let span = reps[0][k][j].1.len();
            let mut bias2 = 0.0;
            let mut variance = 0.0;
            for s in 0..span {
                let m = reps.iter().map(|rep| rep[k][j].1[s]).sum::<f64>() / rf;
                let v = reps
                    .iter()
                    .map(|rep| (rep[k][j].1[s] - m).powi(2))
                    .sum::<f64>()
                    / rf;
                bias2 += m * m;
                variance += v;
            }
            bias2 /= span as f64;
            variance /= span as f64;
            cells.push(FilterCell {
                state: sc.state.clone(),
                filter: label.clone(),
                sigma_h: sc.params.sigma_h,
                bias2,
                variance,
                rmse: (bias2 + variance).sqrt(),
                span,
            });
        }
    }
    Ok(FilterReport {
        replications: cfg.replications,
        seed: cfg.seed,
        sigma_l: cfg.sigma_l,
        filters: labels,
        cells,
    })
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

// ---------------------------------------------------------------------------
// panel estimation

/// Coefficients and error covariance of one fitted dynamic model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgpModel {
    pub alpha: f64,
    pub b_l: f64,
    pub delta_h: f64,
    pub gamma_h: f64,
    pub gamma: Vec<f64>,
    /// Interactive part `lambda_i F_t` (empty for FE). `factor[0]` belongs to
    /// the first simulated year.
    pub lambda: Vec<f64>,
    pub factor: Vec<f64>,
    /// `N x N` error covariance.
    pub sigma_u: Vec<Vec<f64>>,
}

impl DgpModel {
    pub fn truth(&self) -> [f64; 4] {
        [self.alpha, self.b_l, self.delta_h, self.gamma_h]
    }
}

/// Everything the panel study draws from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelCalibration {
    pub unit_ids: Vec<String>,
    pub t: usize,
    /// Components are built from cosines `1..=q_low`.
    pub q_low: usize,
    pub mu_x: Vec<f64>,
    pub lambda_l: Vec<f64>,
    /// Deterministic common low-frequency path.
    pub common_low: Vec<f64>,
    /// `N x N` covariance of each unit's idiosyncratic cosine coefficients.
    pub sigma_l_coef: Vec<Vec<f64>>,
    pub lambda_h: Vec<f64>,
    /// Cosines 5..=28 of the aggregate high-frequency component.
    pub enso: Vec<f64>,
    pub ar_rho: f64,
    pub ar_sigma: f64,
    /// `N x N` covariance of the idiosyncratic high-frequency component.
    pub sigma_h: Vec<Vec<f64>>,
    pub fe: DgpModel,
    pub ife: DgpModel,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn from_rows(v: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(v.len(), v.len(), |i, j| v[i][j])
}

/// Symmetric square root factor `V diag(sqrt(max(l, 0)))`.
fn cov_root(v: &[Vec<f64>]) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(from_rows(v));
    let n = vals.len();
    DMatrix::from_fn(n, n, |i, j| vecs[(i, j)] * vals[j].max(0.0).sqrt())
}

fn dgp_from(est: &crate::panel::PanelEstimate, t_full: usize) -> DgpModel {
    let c = |name: &str| est.coefficient(name).unwrap_or(0.0);
    let u = &est.residuals.values;
    let tu = u.ncols() as f64;
    let sigma = u * u.transpose() / tu;
    let (gamma, lambda, factor) = match &est.heterogeneity {
        FittedHeterogeneity::Unit { gamma } => (gamma.clone(), Vec::new(), Vec::new()),
        FittedHeterogeneity::TwoWay { gamma, .. } => (gamma.clone(), Vec::new(), Vec::new()),
        FittedHeterogeneity::Interactive {
            gamma,
            lambda,
            factors,
        } => {
            // the regression sample starts one year after the simulated one
            let mut f = vec![0.0; t_full];
            f[t_full - factors[0].len()..].copy_from_slice(&factors[0]);
            (gamma.clone(), lambda.iter().map(|l| l[0]).collect(), f)
        }
    };
    DgpModel {
        alpha: c("alpha"),
        b_l: c("b_L"),
        delta_h: c("delta_H"),
        gamma_h: c("gamma_H"),
        gamma,
        lambda,
        factor,
        sigma_u: rows(&sigma),
    }
}

impl PanelCalibration {
    /// Calibrates the component processes and both dynamic models to a
    /// (demeaned) temperature panel and a growth panel on the same axes.
    pub fn from_data(temperature: &Panel, growth: &Panel, q: usize) -> Result<Self> {
        if !temperature.same_axes(growth) {
            return Err(Error::IncompatibleAxes(
                "temperature and growth must share axes".into(),
            ));
        }
        let (n, t) = (temperature.n(), temperature.t());
        if n < 3 {
            return Err(Error::MissingCalibration(
                "need at least three units".into(),
            ));
        }
        let basis = MwBasis::new(t, q)?;
        let x = &temperature.values;
        let mu_x: Vec<f64> = (0..n).map(|i| x.row(i).sum() / t as f64).collect();
        let coefs: Vec<Vec<f64>> = (0..n)
            .map(|i| basis.coefficients(&temperature.row_values(i)))
            .collect();
        let agg: Vec<f64> = (0..q)
            .map(|j| coefs.iter().map(|c| c[j]).sum::<f64>() / n as f64)
            .collect();
        let aa: f64 = agg.iter().map(|v| v * v).sum();
        let lambda_l: Vec<f64> = coefs
            .iter()
            .map(|c| c.iter().zip(&agg).map(|(a, b)| a * b).sum::<f64>() / aa)
            .collect();
        let resid_coef = DMatrix::from_fn(n, q, |i, j| coefs[i][j] - lambda_l[i] * agg[j]);
        let sigma_l_coef = &resid_coef * resid_coef.transpose() / q as f64;
        let common_low = basis.synthesize(&agg);

        let low: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                basis
                    .synthesize(&coefs[i])
                    .iter()
                    .map(|v| v + mu_x[i])
                    .collect()
            })
            .collect();
        let high = DMatrix::from_fn(n, t, |i, s| x[(i, s)] - low[i][s]);
        let hbar: Vec<f64> = (0..t).map(|s| high.column(s).sum() / n as f64).collect();
        let q_enso = ENSO_Q.min(t / 2);
        let enso = if q_enso > 4 {
            let b = MwBasis::new(t, q_enso)?;
            let mut c = b.coefficients(&hbar);
            c.iter_mut().take(4).for_each(|v| *v = 0.0);
            b.synthesize(&c)
        } else {
            vec![0.0; t]
        };
        let r: Vec<f64> = hbar.iter().zip(&enso).map(|(h, e)| h - e).collect();
        let num: f64 = r.windows(2).map(|w| w[1] * w[0]).sum();
        let den: f64 = r[..t - 1].iter().map(|v| v * v).sum();
        let ar_rho = if den > 0.0 {
            (num / den).clamp(-0.95, 0.95)
        } else {
            0.0
        };
        let innov: Vec<f64> = r.windows(2).map(|w| w[1] - ar_rho * w[0]).collect();
        let ar_sigma = sample_sd(&innov);
        let hh: f64 = hbar.iter().map(|v| v * v).sum();
        let lambda_h: Vec<f64> = (0..n)
            .map(|i| {
                if hh > 0.0 {
                    high.row(i)
                        .iter()
                        .zip(&hbar)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        / hh
                } else {
                    0.0
                }
            })
            .collect();
        let v = DMatrix::from_fn(n, t, |i, s| high[(i, s)] - lambda_h[i] * hbar[s]);
        let sigma_h = &v * v.transpose() / t as f64;

        let low_p = temperature.with_values(DMatrix::from_fn(n, t, |i, s| low[i][s]));
        let high_p = temperature.with_values(high);
        let fe = estimate(&PanelSpec::dynamic_model(
            growth,
            &low_p,
            &high_p,
            Heterogeneity::Fe,
        )?)?;
        let ife = estimate(&PanelSpec::dynamic_model(
            growth,
            &low_p,
            &high_p,
            Heterogeneity::Ife { r: 1 },
        )?)?;
        Ok(Self {
            unit_ids: temperature.unit_ids.clone(),
            t,
            q_low: q,
            mu_x,
            lambda_l,
            common_low,
            sigma_l_coef: rows(&sigma_l_coef),
            lambda_h,
            enso,
            ar_rho,
            ar_sigma,
            sigma_h: rows(&sigma_h),
            fe: dgp_from(&fe, t),
            ife: dgp_from(&ife, t),
        })
    }

    /// Calibration to the bundled synthetic U.S.-like panel (1964-2023).
    pub fn builtin(q: usize) -> Result<Self> {
        let cfg = SyntheticConfig::default();
        let data = generate(&cfg)?;
        let years = &data.growth.years;
        let (from, to) = (years[0], years[years.len() - 1]);
        let x = data
            .temperature
            .map_rows(|s| crate::series::demean_pre_cutoff(s, cfg.cutoff).map(|d| d.values))?
            .window(from, to)?;
        Self::from_data(&x, &data.growth, q)
    }

    pub fn n(&self) -> usize {
        self.unit_ids.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        let ok = self.lambda_l.len() == n
            && self.lambda_h.len() == n
            && self.mu_x.len() == n
            && self.common_low.len() == self.t
            && self.enso.len() == self.t
            && self.sigma_h.len() == n
            && self.sigma_l_coef.len() == n
            && [&self.fe, &self.ife]
                .iter()
                .all(|m| m.gamma.len() == n && m.sigma_u.len() == n);
        if !ok || self.ife.lambda.len() != n || self.ife.factor.len() != self.t {
            return Err(Error::MissingCalibration(
                "calibration arrays have inconsistent sizes".into(),
            ));
        }
        Ok(())
    }
}

/// One simulated panel.
struct Draw {
    x: DMatrix<f64>,
    low: DMatrix<f64>,
    high: DMatrix<f64>,
    dy: DMatrix<f64>,
}

struct Simulator<'a> {
    cal: &'a PanelCalibration,
    model: &'a DgpModel,
    basis: MwBasis,
    root_l: DMatrix<f64>,
    root_h: DMatrix<f64>,
    root_u: DMatrix<f64>,
    sigma_l: f64,
    noise: f64,
}

impl<'a> Simulator<'a> {
    fn new(cal: &'a PanelCalibration, model: &'a DgpModel, cfg: &McConfig) -> Result<Self> {
        Ok(Self {
            cal,
            model,
            basis: MwBasis::new(cal.t, cal.q_low)?,
            root_l: cov_root(&cal.sigma_l_coef),
            root_h: cov_root(&cal.sigma_h),
            root_u: cov_root(&model.sigma_u),
            sigma_l: cfg.sigma_l,
            noise: cfg.noise_scale,
        })
    }

    fn draw(&self, rng: &mut StreamRng) -> Draw {
        let (n, t, q) = (self.cal.n(), self.cal.t, self.cal.q_low);
        let m = self.model;
        // common low-frequency path: calibrated level plus a random part with
        // the cosine spectrum of a random walk with innovation sd sigma_L
        let zc = normals(rng, q);
        let tf = t as f64;
        let random_coef: Vec<f64> = (0..q)
            .map(|j| self.sigma_l * zc[j] * tf.sqrt() / ((j + 1) as f64 * std::f64::consts::PI))
            .collect();
        let common_random = self.basis.synthesize(&random_coef);
        let zl = DMatrix::from_vec(n, q, normals(rng, n * q));
        let idio_coef = &self.root_l * zl;
        let ar_e = normals(rng, t);
        let mut ar = vec![0.0; t];
        let stat = self.cal.ar_sigma / (1.0 - self.cal.ar_rho.powi(2)).sqrt();
        for s in 0..t {
            ar[s] = if s == 0 {
                stat * ar_e[0]
            } else {
                self.cal.ar_rho * ar[s - 1] + self.cal.ar_sigma * ar_e[s]
            };
        }
        let zh = DMatrix::from_vec(n, t, normals(rng, n * t));
        let idio_h = &self.root_h * zh;
        let zu = DMatrix::from_vec(n, t, normals(rng, n * t));
        let u = &self.root_u * zu * self.noise;

        let mut low = DMatrix::zeros(n, t);
        let mut high = DMatrix::zeros(n, t);
        for i in 0..n {
            let coef: Vec<f64> = (0..q).map(|j| idio_coef[(i, j)]).collect();
            let idio = self.basis.synthesize(&coef);
            for s in 0..t {
                low[(i, s)] = self.cal.mu_x[i]
                    + self.cal.lambda_l[i] * (self.cal.common_low[s] + common_random[s])
                    + idio[s];
                high[(i, s)] = self.cal.lambda_h[i] * (self.cal.enso[s] + ar[s]) + idio_h[(i, s)];
            }
        }
        let mut dy = DMatrix::zeros(n, t);
        for i in 0..n {
            let mut prev = m.gamma[i] / (1.0 - m.alpha);
            for s in 0..t {
                let h_lag = if s > 0 {
                    high[(i, s - 1)]
                } else {
                    high[(i, 0)]
                };
                let factor = if m.lambda.is_empty() {
                    0.0
                } else {
                    m.lambda[i] * m.factor[s]
                };
                let v = m.gamma[i]
                    + m.alpha * prev
                    + m.b_l * low[(i, s)]
                    + m.delta_h * (high[(i, s)] - h_lag)
                    + m.gamma_h * h_lag
                    + factor
                    + u[(i, s)];
                dy[(i, s)] = v;
                prev = v;
            }
        }
        Draw {
            x: &low + &high,
            low,
            high,
            dy,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientCell {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    /// Sample sd of the stored estimates (divisor R - 1).
    pub sd: f64,
    /// Variance with divisor R, so that `rmse^2 = bias^2 + variance`.
    pub variance: f64,
    pub rmse: f64,
    /// Coverage of the nominal-level intervals by scheme.
    pub coverage_oneway: f64,
    pub coverage_twoway: f64,
    pub coverage_boot: Option<f64>,
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PanelReport {
    pub design: McDesign,
    pub replications: usize,
    pub seed: u64,
    pub level: f64,
    pub boot_b: usize,
    pub q: usize,
    pub sigma_l: f64,
    pub n: usize,
    pub t: usize,
    /// Calibrated component-process parameters.
    pub header: BTreeMap<String, f64>,
    pub cells: Vec<CoefficientCell>,
    /// Replications whose IFE iteration hit the cap.
    pub unconverged: usize,
}

impl PanelReport {
    pub fn cell(&self, name: &str) -> Option<&CoefficientCell> {
        self.cells.iter().find(|c| c.name == name)
    }
}

struct RepOutcome {
    estimates: Vec<f64>,
    oneway: Vec<bool>,
    twoway: Vec<bool>,
    boot: Option<Vec<bool>>,
    converged: bool,
}

fn covers(lo: f64, hi: f64, truth: f64) -> bool {
    // tolerance for intervals that collapse onto the truth
    let tol = 1e-9 * (1.0 + truth.abs());
    lo - tol <= truth && truth <= hi + tol
}

/// Simulates the dynamic panel model, re-estimates it each replication and
/// tabulates bias, dispersion and the coverage of one-way, two-way and
/// bootstrap intervals for every coefficient.
pub fn mc_panel(cfg: &McConfig, cal: &PanelCalibration) -> Result<PanelReport> {
    cfg.validate()?;
    cal.validate()?;
    let (het, model) = match cfg.design {
        McDesign::PanelFe => (Heterogeneity::Fe, &cal.fe),
        McDesign::PanelIfe => (Heterogeneity::Ife { r: 1 }, &cal.ife),
        McDesign::FilterRmse => {
            return Err(Error::InvalidInput(
                "use mc_filter_rmse for the filter design".into(),
            ))
        }
    };
    let sim = Simulator::new(cal, model, cfg)?;
    let basis = MwBasis::new(cal.t, cfg.q)?;
    let truth = model.truth();
    let z = crate::inference::normal_critical(cfg.level);
    let ids = cal.unit_ids.clone();
    let years: Vec<i32> = (0..cal.t as i32).collect();
    let outcomes: Vec<Result<RepOutcome>> = map_indices(cfg.replications, |r| {
        let mut rng = stream(cfg.seed, r as u64);
        let d = sim.draw(&mut rng);
        let (low, high) = match cfg.components {
            ComponentMode::True => (d.low, d.high),
            ComponentMode::Estimated => {
                let n = d.x.nrows();
                let mut low = DMatrix::zeros(n, cal.t);
                for i in 0..n {
                    let row: Vec<f64> = d.x.row(i).iter().copied().collect();
                    for (s, v) in basis.project(&row).into_iter().enumerate() {
                        low[(i, s)] = v;
                    }
                }
                let high = &d.x - &low;
                (low, high)
            }
        };
        let mk = |m: DMatrix<f64>| Panel::new(ids.clone(), years.clone(), m);
        let spec = PanelSpec::dynamic_model(&mk(d.dy)?, &mk(low)?, &mk(high)?, het)?;
        let design = spec.prepare()?;
        let est = design.fit(&spec.dependent.values)?;
        let one = cluster_se_oneway(&est)?;
        let two = cluster_se_twoway(&est)?;
        let check = |se: &[f64]| -> Vec<bool> {
            (0..4)
                .map(|k| {
                    covers(
                        est.coefficients[k] - z * se[k],
                        est.coefficients[k] + z * se[k],
                        truth[k],
                    )
                })
                .collect()
        };
        let boot = if cfg.boot_b > 0 {
            let opts = BootstrapOptions {
                b: cfg.boot_b,
                levels: vec![cfg.level],
                seed: subseed(cfg.seed, 1_000_000 + r as u64),
                resampling: Resampling::Gaussian,
                keep_draws: false,
            };
            let v = bootstrap_prepared(&design, &est, &opts)?;
            Some(
                (0..4)
                    .map(|k| {
                        let (lo, hi) = v.interval(k, cfg.level).expect("requested level");
                        covers(lo, hi, truth[k])
                    })
                    .collect(),
            )
        } else {
            None
        };
        Ok(RepOutcome {
            oneway: check(&one.se),
            twoway: check(&two.se),
            boot,
            converged: est.converged,
            estimates: est.coefficients,
        })
    });
    let outcomes: Vec<RepOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
    let rf = cfg.replications as f64;
    let share =
        |f: &dyn Fn(&RepOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / rf;
    let names = ["alpha", "b_L", "delta_H", "gamma_H"];
    let cells = (0..4)
        .map(|k| {
            let est: Vec<f64> = outcomes.iter().map(|o| o.estimates[k]).collect();
            let mean = est.iter().sum::<f64>() / rf;
            let variance = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / rf;
            let bias = mean - truth[k];
            CoefficientCell {
                name: names[k].to_string(),
                truth: truth[k],
                mean,
                bias,
                sd: sample_sd(&est),
                variance,
                rmse: (bias * bias + variance).sqrt(),
                coverage_oneway: share(&|o| o.oneway[k]),
                coverage_twoway: share(&|o| o.twoway[k]),
                coverage_boot: (cfg.boot_b > 0)
                    .then(|| share(&|o| o.boot.as_ref().is_some_and(|b| b[k]))),
                estimates: est,
            }
        })
        .collect();
    let header = BTreeMap::from([
        ("ar_rho".to_string(), cal.ar_rho),
        ("ar_sigma".to_string(), cal.ar_sigma),
        ("q_low".to_string(), cal.q_low as f64),
        (
            "mean_lambda_l".to_string(),
            cal.lambda_l.iter().sum::<f64>() / cal.n() as f64,
        ),
        (
            "mean_lambda_h".to_string(),
            cal.lambda_h.iter().sum::<f64>() / cal.n() as f64,
        ),
    ]);
    Ok(PanelReport {
        design: cfg.design,
        replications: cfg.replications,
        seed: cfg.seed,
        level: cfg.level,
        boot_b: cfg.boot_b,
        q: cfg.q,
        sigma_l: cfg.sigma_l,
        n: cal.n(),
        t: cal.t,
        header,
        cells,
        unconverged: outcomes.iter().filter(|o| !o.converged).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn filter_report_identity_and_noiseless_cell() {
        let mut cal = FilterCalibration::builtin(0.2, 80).unwrap();
        for s in cal.states.iter_mut() {
            s.params.sigma_h = 0.0;
        }
        let cfg = McConfig {
            replications: 4,
            ..Default::default()
        };
        let rep = mc_filter_rmse(&cfg, &cal).unwrap();
        for c in &rep.cells {
            assert!((c.rmse.powi(2) - c.bias2 - c.variance).abs() < 1e-10);
            assert!(c.variance < 1e-20);
        }
        cal.states.pop();
        assert!(matches!(
            mc_filter_rmse(&cfg, &cal),
            Err(Error::MissingCalibration(_))
        ));
    }

    #[test]
    fn noiseless_panel_recovers_truth() {
        let cal = PanelCalibration::builtin(4).unwrap();
        for design in [McDesign::PanelFe, McDesign::PanelIfe] {
            let cfg = McConfig {
                design,
                replications: 3,
                boot_b: 99,
                components: ComponentMode::True,
                noise_scale: 0.0,
                ..Default::default()
            };
            let rep = mc_panel(&cfg, &cal).unwrap();
            for c in &rep.cells {
                assert!(c.bias.abs() < 1e-6, "{design:?} {}: {}", c.name, c.bias);
                assert_eq!(c.coverage_boot, Some(1.0));
                assert!((c.rmse.powi(2) - c.bias.powi(2) - c.variance).abs() < 1e-10);
            }
        }
    }
}
