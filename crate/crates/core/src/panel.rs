//! Panel regressions of growth on temperature components with unit (FE),
//! additive two-way (AFE) or interactive (IFE) fixed effects.
//!
//! Observations are stacked unit-major: row `i * T + t` of a design matrix
//! holds unit `i` in year `t`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram_inverse, sym_eigen_desc};
use crate::series::Panel;

pub const IFE_TOL: f64 = 1e-8;
pub const IFE_MAX_ITER: usize = 1000;
const IFE_POLISH_ITER: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Heterogeneity {
    Fe,
    Afe,
    Ife { r: usize },
}

impl Heterogeneity {
    pub fn label(&self) -> String {
        match self {
            Heterogeneity::Fe => "FE".into(),
            Heterogeneity::Afe => "AFE".into(),
            Heterogeneity::Ife { r } => format!("IFE({r})"),
        }
    }
}

/// Regressand, named regressors and the heterogeneity model. All panels
/// share units and years.
#[derive(Debug, Clone)]
pub struct PanelSpec {
    pub dependent: Panel,
    pub regressors: Vec<(String, Panel)>,
    pub heterogeneity: Heterogeneity,
    pub dynamic: bool,
    pub interaction: bool,
}

impl PanelSpec {
    pub fn new(
        dependent: Panel,
        regressors: Vec<(String, Panel)>,
        heterogeneity: Heterogeneity,
    ) -> Result<Self> {
        if regressors.is_empty() {
            return Err(Error::InvalidInput(
                "at least one regressor is required".into(),
            ));
        }
        for (name, p) in &regressors {
            if !p.same_axes(&dependent) {
                return Err(Error::IncompatibleAxes(format!(
                    "regressor {name} does not share the regressand's units and years"
                )));
            }
        }
        if let Heterogeneity::Ife { r } = heterogeneity {
            if r == 0 {
                return Err(Error::InvalidInput("IFE needs r >= 1".into()));
            }
        }
        Ok(Self {
            dependent,
            regressors,
            heterogeneity,
            dynamic: false,
            interaction: false,
        })
    }

    /// `dY = beta_L L (+ beta_H H) + m`.
    pub fn static_model(
        dy: &Panel,
        low: &Panel,
        high: Option<&Panel>,
        het: Heterogeneity,
    ) -> Result<Self> {
        let mut regs = vec![("beta_L".to_string(), low.clone())];
        if let Some(h) = high {
            regs.push(("beta_H".to_string(), h.clone()));
        }
        Self::new(dy.clone(), regs, het)
    }

    /// `dY_t = alpha dY_{t-1} + b_L L_t + delta_H dH_t + gamma_H H_{t-1} + m`.
    /// The first year is lost to the lags.
    pub fn dynamic_model(
        dy: &Panel,
        low: &Panel,
        high: &Panel,
        het: Heterogeneity,
    ) -> Result<Self> {
        if !dy.same_axes(low) || !dy.same_axes(high) {
            return Err(Error::IncompatibleAxes(
                "components and growth must share axes".into(),
            ));
        }
        let t = dy.t();
        if t < 3 {
            return Err(Error::SampleTooShort { t, needed: 3 });
        }
        let years = dy.years[1..].to_vec();
        let shifted =
            |p: &Panel, f: &dyn Fn(&DMatrix<f64>, usize, usize) -> f64| -> Result<Panel> {
                let m = DMatrix::from_fn(p.n(), t - 1, |i, s| f(&p.values, i, s + 1));
                let mut out = Panel::new(p.unit_ids.clone(), years.clone(), m)?;
                out.weights = p.weights.clone();
                out.units_label = p.units_label.clone();
                Ok(out)
            };
        let current = |m: &DMatrix<f64>, i: usize, s: usize| m[(i, s)];
        let lagged = |m: &DMatrix<f64>, i: usize, s: usize| m[(i, s - 1)];
        let diff = |m: &DMatrix<f64>, i: usize, s: usize| m[(i, s)] - m[(i, s - 1)];
        let regs = vec![
            ("alpha".to_string(), shifted(dy, &lagged)?),
            ("b_L".to_string(), shifted(low, &current)?),
            ("delta_H".to_string(), shifted(high, &diff)?),
            ("gamma_H".to_string(), shifted(high, &lagged)?),
        ];
        let mut spec = Self::new(shifted(dy, &current)?, regs, het)?;
        spec.dynamic = true;
        Ok(spec)
    }

    /// `dY = beta_L L + beta_H H + beta_HL H*L + m` with the uncentered product.
    pub fn interaction_model(
        dy: &Panel,
        low: &Panel,
        high: &Panel,
        het: Heterogeneity,
    ) -> Result<Self> {
        if !low.same_axes(high) {
            return Err(Error::IncompatibleAxes("components must share axes".into()));
        }
        let product = low.with_values(low.values.component_mul(&high.values));
        let regs = vec![
            ("beta_L".to_string(), low.clone()),
            ("beta_H".to_string(), high.clone()),
            ("beta_HL".to_string(), product),
        ];
        let mut spec = Self::new(dy.clone(), regs, het)?;
        spec.interaction = true;
        Ok(spec)
    }

    pub fn with_heterogeneity(&self, het: Heterogeneity) -> Result<Self> {
        let mut s = Self::new(self.dependent.clone(), self.regressors.clone(), het)?;
        s.dynamic = self.dynamic;
        s.interaction = self.interaction;
        Ok(s)
    }

    pub fn names(&self) -> Vec<String> {
        self.regressors.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn n(&self) -> usize {
        self.dependent.n()
    }

    pub fn t(&self) -> usize {
        self.dependent.t()
    }

    pub fn regressor(&self, name: &str) -> Option<&Panel> {
        self.regressors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
    }

    /// Transforms the regressors once so that many regressands can be fitted
    /// against the same design.
    pub fn prepare(&self) -> Result<PreparedDesign> {
        PreparedDesign::new(self)
    }
}

/// Subtracts each row's mean.
pub fn demean_units(m: &DMatrix<f64>) -> DMatrix<f64> {
    let t = m.ncols() as f64;
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let mean = row.sum() / t;
        row.add_scalar_mut(-mean);
    }
    out
}

/// Two-way within transformation `x - x_i. - x_.t + x_..`.
pub fn demean_two_way(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, t) = m.shape();
    let rows: Vec<f64> = (0..n).map(|i| m.row(i).sum() / t as f64).collect();
    let cols: Vec<f64> = (0..t).map(|s| m.column(s).sum() / n as f64).collect();
    let grand = rows.iter().sum::<f64>() / n as f64;
    DMatrix::from_fn(n, t, |i, s| m[(i, s)] - rows[i] - cols[s] + grand)
}

fn stack(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let (n, t) = mats[0].shape();
    DMatrix::from_fn(n * t, mats.len(), |row, k| mats[k][(row / t, row % t)])
}

fn flatten(m: &DMatrix<f64>) -> DVector<f64> {
    let (n, t) = m.shape();
    DVector::from_fn(n * t, |row, _| m[(row / t, row % t)])
}

/// Estimated `m_it`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedHeterogeneity {
    Unit {
        gamma: Vec<f64>,
    },
    TwoWay {
        gamma: Vec<f64>,
        xi: Vec<f64>,
    },
    Interactive {
        gamma: Vec<f64>,
        /// `N x r`
        lambda: Vec<Vec<f64>>,
        /// `r x T`, normalized to `F F' / T = I`
        factors: Vec<Vec<f64>>,
    },
}

impl FittedHeterogeneity {
    /// `m_it` as an `N x T` matrix.
    pub fn matrix(&self, n: usize, t: usize) -> DMatrix<f64> {
        match self {
            FittedHeterogeneity::Unit { gamma } => DMatrix::from_fn(n, t, |i, _| gamma[i]),
            FittedHeterogeneity::TwoWay { gamma, xi } => {
                DMatrix::from_fn(n, t, |i, s| gamma[i] + xi[s])
            }
            FittedHeterogeneity::Interactive {
                gamma,
                lambda,
                factors,
            } => DMatrix::from_fn(n, t, |i, s| {
                gamma[i]
                    + lambda[i]
                        .iter()
                        .zip(factors)
                        .map(|(l, f)| l * f[s])
                        .sum::<f64>()
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PanelEstimate {
    pub model: Heterogeneity,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub residuals: Panel,
    pub heterogeneity: FittedHeterogeneity,
    /// Outer iterations (IFE only; zero otherwise).
    pub iterations: usize,
    pub converged: bool,
    /// Sum of squared residuals.
    pub objective: f64,
    /// SSR after each IFE iteration.
    pub ssr_path: Vec<f64>,
    /// Stacked design after removing the fixed effects (and, for IFE, the
    /// estimated factors); the regressors seen by the sandwich variances.
    #[serde(skip)]
    pub design: DMatrix<f64>,
    /// `(design' design)^{-1}`.
    #[serde(skip)]
    pub bread: DMatrix<f64>,
}

impl PanelEstimate {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.coefficients[k])
    }

    pub fn k(&self) -> usize {
        self.coefficients.len()
    }

    pub fn nobs(&self) -> usize {
        self.residuals.n() * self.residuals.t()
    }

    /// Stacked residual vector matching the rows of [`Self::design`].
    pub fn residual_vector(&self) -> DVector<f64> {
        flatten(&self.residuals.values)
    }

    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence {
                iterations: self.iterations,
            })
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IfeOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IfeOptions {
    fn default() -> Self {
        Self {
            tol: IFE_TOL,
            max_iter: IFE_MAX_ITER,
        }
    }
}

/// Regressors after the within transformation, with the inverse Gram
/// matrix precomputed.
#[derive(Debug, Clone)]
pub struct PreparedDesign {
    pub heterogeneity: Heterogeneity,
    pub names: Vec<String>,
    template: Panel,
    raw: Vec<DMatrix<f64>>,
    within: Vec<DMatrix<f64>>,
    stacked: DMatrix<f64>,
    xtx_inv: DMatrix<f64>,
    pub ife: IfeOptions,
}

impl PreparedDesign {
    fn new(spec: &PanelSpec) -> Result<Self> {
        let raw: Vec<DMatrix<f64>> = spec
            .regressors
            .iter()
            .map(|(_, p)| p.values.clone())
            .collect();
        let within: Vec<DMatrix<f64>> = raw
            .iter()
            .map(|m| match spec.heterogeneity {
                Heterogeneity::Afe => demean_two_way(m),
                _ => demean_units(m),
            })
            .collect();
        for (k, (w, r)) in within.iter().zip(&raw).enumerate() {
            let (wn, rn) = (w.norm(), r.norm());
            if rn == 0.0 || wn <= 1e-10 * rn {
                return Err(Error::RankDeficientDesign(format!(
                    "regressor {} is absorbed by the {} effects",
                    spec.regressors[k].0,
                    spec.heterogeneity.label()
                )));
            }
        }
        let stacked = stack(&within);
        let xtx_inv = gram_inverse(&stacked)?;
        let mut template = spec.dependent.clone();
        template.values.fill(0.0);
        Ok(Self {
            heterogeneity: spec.heterogeneity,
            names: spec.names(),
            template,
            raw,
            within,
            stacked,
            xtx_inv,
            ife: IfeOptions::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.template.n()
    }

    pub fn t(&self) -> usize {
        self.template.t()
    }

    /// `sum_k beta_k X_k` on the raw regressors.
    pub fn linear_part(&self, beta: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n(), self.t());
        for (b, x) in beta.iter().zip(&self.raw) {
            out += x * *b;
        }
        out
    }

    fn within_part(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n(), self.t());
        for (b, x) in beta.iter().zip(&self.within) {
            out += x * *b;
        }
        out
    }

    /// `beta` minimizing `||M_Lambda (Y - X beta) M_F||` for the current factors.
    fn projected_step(&self, pcs: &LowRank, y: &DMatrix<f64>) -> Option<DVector<f64>> {
        let px: Vec<DMatrix<f64>> = self
            .within
            .iter()
            .map(|x| pcs.annihilate_both(x))
            .collect::<Option<_>>()?;
        let design = stack(&px);
        let inv = gram_inverse(&design).ok()?;
        Some(inv * design.tr_mul(&flatten(&pcs.annihilate_both(y)?)))
    }

    fn solve(&self, y: &DMatrix<f64>) -> DVector<f64> {
        &self.xtx_inv * self.stacked.tr_mul(&flatten(y))
    }

    /// Fits the regressand `y` (`N x T`).
    pub fn fit(&self, y: &DMatrix<f64>) -> Result<PanelEstimate> {
        if y.shape() != (self.n(), self.t()) {
            return Err(Error::IncompatibleAxes(
                "regressand shape differs from the design".into(),
            ));
        }
        match self.heterogeneity {
            Heterogeneity::Fe => Ok(self.fit_within(y, false)),
            Heterogeneity::Afe => Ok(self.fit_within(y, true)),
            Heterogeneity::Ife { r } => self.fit_ife(y, r),
        }
    }

    fn fit_within(&self, y: &DMatrix<f64>, two_way: bool) -> PanelEstimate {
        let yw = if two_way {
            demean_two_way(y)
        } else {
            demean_units(y)
        };
        let beta = self.solve(&yw);
        let resid = &yw - self.within_part(&beta);
        let coeffs: Vec<f64> = beta.iter().copied().collect();
        let net = y - self.linear_part(&coeffs);
        let (n, t) = (self.n(), self.t());
        let gamma: Vec<f64> = (0..n).map(|i| net.row(i).sum() / t as f64).collect();
        let heterogeneity = if two_way {
            let grand = gamma.iter().sum::<f64>() / n as f64;
            let xi = (0..t)
                .map(|s| net.column(s).sum() / n as f64 - grand)
                .collect();
            FittedHeterogeneity::TwoWay { gamma, xi }
        } else {
            FittedHeterogeneity::Unit { gamma }
        };
        PanelEstimate {
            model: self.heterogeneity,
            names: self.names.clone(),
            coefficients: coeffs,
            objective: resid.norm_squared(),
            residuals: self.template.with_values(resid),
            heterogeneity,
            iterations: 0,
            converged: true,
            ssr_path: Vec::new(),
            design: self.stacked.clone(),
            bread: self.xtx_inv.clone(),
        }
    }

    fn fit_ife(&self, y: &DMatrix<f64>, r: usize) -> Result<PanelEstimate> {
        let (n, t) = (self.n(), self.t());
        if r >= n.min(t) {
            return Err(Error::InvalidInput(format!(
                "r = {r} too large for a {n}x{t} panel"
            )));
        }
        let yw = demean_units(y);
        let mut beta = self.solve(&yw);
        let mut pcs = LowRank::zeros(n, t, r);
        let mut ssr_path = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        let mut polish_until = usize::MAX;
        while iterations < self.ife.max_iter {
            iterations += 1;
            let w = &yw - self.within_part(&beta);
            pcs.refit(&w);
            let common = pcs.matrix();
            let mut next = self.solve(&(&yw - &common));
            let mut ssr = (&yw - self.within_part(&next) - &common).norm_squared();
            // Gauss-Newton step on the concentrated objective, kept when it
            // does at least as well as the alternating step
            if let Some(gn) = self.projected_step(&pcs, &yw) {
                let mut trial = pcs.clone();
                let wg = &yw - self.within_part(&gn);
                trial.refit(&wg);
                let ssr_gn = (&wg - trial.matrix()).norm_squared();
                if ssr_gn <= ssr {
                    next = gn;
                    ssr = ssr_gn;
                }
            }
            ssr_path.push(ssr);
            let step = (&next - &beta).amax();
            beta = next;
            if converged && (step <= self.ife.tol * 1e-4 || iterations >= polish_until) {
                break;
            }
            if !converged && step <= self.ife.tol {
                // a few extra passes tighten the first-order conditions
                converged = true;
                polish_until = iterations + IFE_POLISH_ITER;
            }
        }
        if !converged {
            log::warn!("IFE iteration stopped after {iterations} steps without convergence");
        }
        // factors consistent with the final coefficients
        pcs.refit(&(&yw - self.within_part(&beta)));
        let common = pcs.matrix();
        let resid = &yw - self.within_part(&beta) - &common;
        let objective = resid.norm_squared();
        ssr_path.push(objective);

        let coeffs: Vec<f64> = beta.iter().copied().collect();
        let net = y - self.linear_part(&coeffs);
        let gamma: Vec<f64> = (0..n).map(|i| net.row(i).sum() / t as f64).collect();

        // sandwich design: within regressors with the factor space projected out
        let projected: Vec<DMatrix<f64>> = self.within.iter().map(|x| pcs.annihilate(x)).collect();
        let design = stack(&projected);
        let bread = gram_inverse(&design).unwrap_or_else(|_| self.xtx_inv.clone());

        Ok(PanelEstimate {
            model: self.heterogeneity,
            names: self.names.clone(),
            coefficients: coeffs,
            residuals: self.template.with_values(resid),
            heterogeneity: FittedHeterogeneity::Interactive {
                gamma,
                lambda: (0..n)
                    .map(|i| (0..r).map(|k| pcs.lambda[(i, k)]).collect())
                    .collect(),
                factors: (0..r)
                    .map(|k| pcs.f.column(k).iter().copied().collect())
                    .collect(),
            },
            iterations,
            converged,
            objective,
            ssr_path,
            design,
            bread,
        })
    }
}

/// Rank-`r` principal-component approximation `Lambda F'` of an `N x T`
/// matrix with `F'F / T = I`.
#[derive(Debug, Clone)]
struct LowRank {
    /// `T x r`
    f: DMatrix<f64>,
    /// `N x r`
    lambda: DMatrix<f64>,
    warm: bool,
}

impl LowRank {
    fn zeros(n: usize, t: usize, r: usize) -> Self {
        Self {
            f: DMatrix::zeros(t, r),
            lambda: DMatrix::zeros(n, r),
            warm: false,
        }
    }

    fn matrix(&self) -> DMatrix<f64> {
        &self.lambda * self.f.transpose()
    }

    /// `x - (x F) F' / T`, row by row.
    fn annihilate(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let t = self.f.nrows() as f64;
        x - (x * &self.f) * self.f.transpose() / t
    }

    /// `M_Lambda x M_F`; `None` when the loadings are degenerate.
    fn annihilate_both(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let ll = self.lambda.tr_mul(&self.lambda).try_inverse()?;
        let right = self.annihilate(x);
        let proj = &self.lambda * (ll * self.lambda.tr_mul(&right));
        Some(right - proj)
    }

    fn refit(&mut self, w: &DMatrix<f64>) {
        let (n, t) = w.shape();
        let r = self.f.ncols();
        if w.amax() <= f64::MIN_POSITIVE {
            self.f.fill(0.0);
            self.lambda.fill(0.0);
            self.warm = false;
            return;
        }
        let found = r == 1 && self.warm && self.power_step(w);
        if !found {
            let (vals, vecs) = if t <= n {
                sym_eigen_desc(w.tr_mul(w))
            } else {
                sym_eigen_desc(w * w.transpose())
            };
            for k in 0..r {
                if vals[k] <= 0.0 {
                    self.f.column_mut(k).fill(0.0);
                    continue;
                }
                let col: DVector<f64> = if t <= n {
                    vecs.column(k).into_owned()
                } else {
                    w.tr_mul(&vecs.column(k))
                };
                let norm = col.norm();
                self.f.set_column(k, &(col * ((t as f64).sqrt() / norm)));
            }
        }
        // sign: factor co-moves with the cross-sectional mean residual
        let mean: DVector<f64> = DVector::from_fn(t, |s, _| w.column(s).sum() / n as f64);
        for k in 0..r {
            if self.f.column(k).dot(&mean) < 0.0 {
                self.f.column_mut(k).neg_mut();
            }
        }
        self.lambda = w * &self.f / t as f64;
        self.warm = true;
    }

    /// Power iteration on `W'W` from the previous factor. Returns false when
    /// it does not settle, in which case the caller falls back to a full
    /// eigen-decomposition.
    fn power_step(&mut self, w: &DMatrix<f64>) -> bool {
        let t = w.ncols() as f64;
        let mut v: DVector<f64> = self.f.column(0).into_owned();
        let norm = v.norm();
        if norm == 0.0 {
            return false;
        }
        v /= norm;
        for _ in 0..300 {
            let mut next = w.tr_mul(&(w * &v));
            let nn = next.norm();
            if nn == 0.0 {
                return false;
            }
            next /= nn;
            let delta = (&next - &v).amax();
            v = next;
            if delta <= 1e-13 {
                self.f.set_column(0, &(v * t.sqrt()));
                return true;
            }
        }
        false
    }
}

fn check_model(spec: &PanelSpec, want: &str, ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "spec carries {} heterogeneity, expected {want}",
            spec.heterogeneity.label()
        )))
    }
}

/// Fits the spec under its own heterogeneity model.
pub fn estimate(spec: &PanelSpec) -> Result<PanelEstimate> {
    spec.prepare()?.fit(&spec.dependent.values)
}

pub fn fe_estimate(spec: &PanelSpec) -> Result<PanelEstimate> {
    check_model(spec, "FE", spec.heterogeneity == Heterogeneity::Fe)?;
    estimate(spec)
}

pub fn afe_estimate(spec: &PanelSpec) -> Result<PanelEstimate> {
    check_model(spec, "AFE", spec.heterogeneity == Heterogeneity::Afe)?;
    estimate(spec)
}

/// Bai-type iteration between least squares and principal components on
/// unit-demeaned data, started from the FE estimate. A run that hits the
/// iteration cap is returned with `converged = false`.
pub fn ife_estimate(spec: &PanelSpec) -> Result<PanelEstimate> {
    ife_estimate_with(spec, IfeOptions::default())
}

pub fn ife_estimate_with(spec: &PanelSpec, opts: IfeOptions) -> Result<PanelEstimate> {
    check_model(
        spec,
        "IFE",
        matches!(spec.heterogeneity, Heterogeneity::Ife { .. }),
    )?;
    let mut design = spec.prepare()?;
    design.ife = opts;
    design.fit(&spec.dependent.values)
}

/// Cumulated response `b_L / (1 - alpha)` of the distributed-lag model.
pub fn long_run_effect(b_l: f64, alpha: f64) -> Result<f64> {
    if !(alpha.abs() < 1.0) {
        return Err(Error::ExplosiveDynamics { alpha });
    }
    Ok(b_l / (1.0 - alpha))
}

/// Year-by-year marginal effects of the interaction model.
#[derive(Debug, Clone, Serialize)]
pub struct MarginalEffects {
    pub years: Vec<i32>,
    /// `beta_H + beta_HL * mean_i L_it`
    pub me_h: Vec<f64>,
    /// `beta_L + beta_HL * mean_i H_it`
    pub me_l: Vec<f64>,
}

pub fn marginal_effects(est: &PanelEstimate, low: &Panel, high: &Panel) -> Result<MarginalEffects> {
    let get = |name: &str| {
        est.coefficient(name)
            .ok_or_else(|| Error::InvalidInput(format!("estimate has no {name} coefficient")))
    };
    let (bl, bh, bhl) = (get("beta_L")?, get("beta_H")?, get("beta_HL")?);
    if !low.same_axes(high) {
        return Err(Error::IncompatibleAxes("components must share axes".into()));
    }
    let n = low.n() as f64;
    let lbar: Vec<f64> = (0..low.t())
        .map(|s| low.values.column(s).sum() / n)
        .collect();
    let hbar: Vec<f64> = (0..high.t())
        .map(|s| high.values.column(s).sum() / n)
        .collect();
    Ok(MarginalEffects {
        years: low.years.clone(),
        me_h: lbar.iter().map(|l| bh + bhl * l).collect(),
        me_l: hbar.iter().map(|h| bl + bhl * h).collect(),
    })
}

/// Interaction model fit plus its marginal-effect paths.
pub fn nonlinear_estimate(spec: &PanelSpec) -> Result<(PanelEstimate, MarginalEffects)> {
    if !spec.interaction {
        return Err(Error::InvalidInput("spec has no interaction term".into()));
    }
    let est = estimate(spec)?;
    let low = spec
        .regressor("beta_L")
        .expect("interaction spec has beta_L");
    let high = spec
        .regressor("beta_H")
        .expect("interaction spec has beta_H");
    let me = marginal_effects(&est, low, high)?;
    Ok((est, me))
}
