//! Cluster-robust and HAC sandwich variances, and the fixed-design
//! percentile bootstrap for panel estimates.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{gram_inverse, psd_repair, quantile_sorted, sample_sd, sym_eigen_desc};
use crate::panel::{Heterogeneity, PanelEstimate, PanelSpec, PreparedDesign};
use crate::par::map_indices;
use crate::rng::stream;

pub const DEFAULT_LEVELS: [f64; 2] = [0.68, 0.90];
pub const DEFAULT_BOOT_REPS: usize = 399;
pub const MIN_BOOT_REPS: usize = 99;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Scheme {
    OneWayUnit,
    TwoWay,
    Hac { bandwidth: usize },
    Bootstrap { b: usize, levels: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceSet {
    pub level: f64,
    /// `(lo, hi)` per coefficient.
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceEstimate {
    pub scheme: Scheme,
    pub names: Vec<String>,
    pub se: Vec<f64>,
    /// Row-major `k x k` covariance (sample covariance of the draws for the
    /// bootstrap).
    pub covariance: Vec<Vec<f64>>,
    pub ci: Vec<ConfidenceSet>,
    /// Per-replication coefficient vectors (bootstrap, on request).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws: Option<Vec<Vec<f64>>>,
}

impl VarianceEstimate {
    fn from_covariance(scheme: Scheme, names: Vec<String>, v: &DMatrix<f64>) -> Self {
        let k = v.nrows();
        Self {
            scheme,
            names,
            se: (0..k).map(|j| v[(j, j)].max(0.0).sqrt()).collect(),
            covariance: (0..k)
                .map(|i| (0..k).map(|j| v[(i, j)]).collect())
                .collect(),
            ci: Vec::new(),
            draws: None,
        }
    }

    /// Adds `estimate +- z * se` intervals.
    pub fn with_normal_ci(mut self, estimates: &[f64], levels: &[f64]) -> Self {
        for &level in levels {
            let z = normal_critical(level);
            let bounds = estimates
                .iter()
                .zip(&self.se)
                .map(|(b, s)| (b - z * s, b + z * s))
                .collect();
            self.ci.push(ConfidenceSet { level, bounds });
        }
        self
    }

    pub fn interval(&self, coef: usize, level: f64) -> Option<(f64, f64)> {
        self.ci
            .iter()
            .find(|c| (c.level - level).abs() < 1e-12)
            .map(|c| c.bounds[coef])
    }

    pub fn covers(&self, coef: usize, level: f64, truth: f64) -> Option<bool> {
        self.interval(coef, level)
            .map(|(lo, hi)| lo <= truth && truth <= hi)
    }
}

/// Two-sided standard-normal critical value for a coverage level.
pub fn normal_critical(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

#[derive(Debug, Clone, Copy)]
pub struct ClusterOptions {
    /// Apply `G/(G-1) * (n-1)/(n-k)` to every clustered component.
    pub small_sample: bool,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self { small_sample: true }
    }
}

/// `bread * sum_g s_g s_g' * bread` for clusters labelled `0..g`.
pub fn cluster_covariance(
    design: &DMatrix<f64>,
    bread: &DMatrix<f64>,
    resid: &DVector<f64>,
    groups: &[usize],
    g: usize,
    opts: ClusterOptions,
) -> Result<DMatrix<f64>> {
    let (n, k) = design.shape();
    if g < 2 {
        return Err(Error::TooFewClusters(format!("{g} cluster(s)")));
    }
    let mut scores = DMatrix::<f64>::zeros(g, k);
    for row in 0..n {
        let u = resid[row];
        let c = groups[row];
        for j in 0..k {
            scores[(c, j)] += design[(row, j)] * u;
        }
    }
    let meat = scores.tr_mul(&scores);
    let mut v = bread * meat * bread;
    if opts.small_sample {
        let gf = g as f64;
        let nf = n as f64;
        v *= gf / (gf - 1.0) * (nf - 1.0) / (nf - k as f64);
    }
    Ok(v)
}

fn unit_groups(est: &PanelEstimate) -> Vec<usize> {
    let t = est.residuals.t();
    (0..est.nobs()).map(|row| row / t).collect()
}

fn year_groups(est: &PanelEstimate) -> Vec<usize> {
    let t = est.residuals.t();
    (0..est.nobs()).map(|row| row % t).collect()
}

/// Unit-clustered sandwich.
pub fn cluster_se_oneway(est: &PanelEstimate) -> Result<VarianceEstimate> {
    cluster_se_oneway_with(est, ClusterOptions::default())
}

pub fn cluster_se_oneway_with(
    est: &PanelEstimate,
    opts: ClusterOptions,
) -> Result<VarianceEstimate> {
    let u = est.residual_vector();
    let v = cluster_covariance(
        &est.design,
        &est.bread,
        &u,
        &unit_groups(est),
        est.residuals.n(),
        opts,
    )?;
    Ok(VarianceEstimate::from_covariance(
        Scheme::OneWayUnit,
        est.names.clone(),
        &v,
    ))
}

/// Unit-plus-year clustering `V_unit + V_year - V_cell`, with negative
/// eigenvalues set to zero.
pub fn cluster_se_twoway(est: &PanelEstimate) -> Result<VarianceEstimate> {
    cluster_se_twoway_with(est, ClusterOptions::default())
}

pub fn cluster_se_twoway_with(
    est: &PanelEstimate,
    opts: ClusterOptions,
) -> Result<VarianceEstimate> {
    let (n, t) = (est.residuals.n(), est.residuals.t());
    if n < 2 || t < 2 {
        return Err(Error::TooFewClusters(format!("{n} units x {t} years")));
    }
    let u = est.residual_vector();
    let v_unit = cluster_covariance(&est.design, &est.bread, &u, &unit_groups(est), n, opts)?;
    let v_year = cluster_covariance(&est.design, &est.bread, &u, &year_groups(est), t, opts)?;
    let cells: Vec<usize> = (0..est.nobs()).collect();
    let v_cell = cluster_covariance(&est.design, &est.bread, &u, &cells, est.nobs(), opts)?;
    let v = psd_repair(&(v_unit + v_year - v_cell));
    Ok(VarianceEstimate::from_covariance(
        Scheme::TwoWay,
        est.names.clone(),
        &v,
    ))
}

/// `floor(0.75 T^{1/3})`.
pub fn default_nw_bandwidth(t: usize) -> usize {
    (0.75 * (t as f64).cbrt()).floor() as usize
}

/// Bartlett-kernel HAC covariance of OLS coefficients for a time-ordered
/// design `x` (`T x k`). Bandwidth 0 is White's estimator.
pub fn newey_west_covariance(
    x: &DMatrix<f64>,
    resid: &[f64],
    bandwidth: usize,
) -> Result<DMatrix<f64>> {
    let (t, k) = x.shape();
    if resid.len() != t {
        return Err(Error::AxisMismatch(format!(
            "{} residuals for {t} rows",
            resid.len()
        )));
    }
    let bread = gram_inverse(x)?;
    let scores = DMatrix::from_fn(t, k, |s, j| x[(s, j)] * resid[s]);
    let mut meat = scores.tr_mul(&scores);
    for lag in 1..=bandwidth.min(t.saturating_sub(1)) {
        let w = 1.0 - lag as f64 / (bandwidth as f64 + 1.0);
        let lead = scores.rows(lag, t - lag);
        let back = scores.rows(0, t - lag);
        let gamma = lead.tr_mul(&back);
        meat += (&gamma + gamma.transpose()) * w;
    }
    Ok(&bread * meat * &bread)
}

pub fn newey_west_se(
    x: &DMatrix<f64>,
    resid: &[f64],
    bandwidth: usize,
) -> Result<VarianceEstimate> {
    let v = newey_west_covariance(x, resid, bandwidth)?;
    let names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
    Ok(VarianceEstimate::from_covariance(
        Scheme::Hac { bandwidth },
        names,
        &v,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    /// Draw whole years of cross-sectional residual vectors with replacement.
    CrossSections,
    /// Draw `u_t ~ N(0, Sigma_u)` with `Sigma_u` the residual covariance.
    Gaussian,
}

#[derive(Debug, Clone)]
pub struct BootstrapOptions {
    pub b: usize,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub resampling: Resampling,
    pub keep_draws: bool,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            b: DEFAULT_BOOT_REPS,
            levels: DEFAULT_LEVELS.to_vec(),
            seed: 0,
            resampling: Resampling::CrossSections,
            keep_draws: false,
        }
    }
}

/// Fixed-design percentile bootstrap: regressors (lagged growth included)
/// and the fitted heterogeneity stay at their estimated values, only the
/// errors are redrawn, and the full estimator is rerun on every sample.
pub fn fixed_design_bootstrap(
    spec: &PanelSpec,
    est: &PanelEstimate,
    opts: &BootstrapOptions,
) -> Result<VarianceEstimate> {
    let design = spec.prepare()?;
    bootstrap_prepared(&design, est, opts)
}

/// As [`fixed_design_bootstrap`] for a design that has already been prepared.
/// Free parameters absorbed by the heterogeneity term.
pub fn fitted_heterogeneity_params(het: Heterogeneity, n: usize, t: usize) -> usize {
    match het {
        Heterogeneity::Fe => n,
        Heterogeneity::Afe => n + t - 1,
        Heterogeneity::Ife { r } => n + r * (n + t - r),
    }
}

pub fn bootstrap_prepared(
    design: &PreparedDesign,
    est: &PanelEstimate,
    opts: &BootstrapOptions,
) -> Result<VarianceEstimate> {
    if opts.b < MIN_BOOT_REPS {
        return Err(Error::InvalidInput(format!(
            "bootstrap needs at least {MIN_BOOT_REPS} replications, got {}",
            opts.b
        )));
    }
    if let Some(l) = opts.levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(Error::InvalidInput(format!(
            "confidence level {l} outside (0, 1)"
        )));
    }
    let (n, t) = (design.n(), design.t());
    let u = &est.residuals.values;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::BootstrapDegenerate("non-finite residuals".into()));
    }
    let base = est.heterogeneity.matrix(n, t) + design.linear_part(&est.coefficients);
    // residuals are inflated back to the error scale lost to the fitted parameters
    let nt = (n * t) as f64;
    let fitted = (est.k() + fitted_heterogeneity_params(design.heterogeneity, n, t)) as f64;
    let inflate = if nt > fitted {
        (nt / (nt - fitted)).sqrt()
    } else {
        1.0
    };
    let u = &(u * inflate);
    let root = match opts.resampling {
        Resampling::Gaussian => {
            let sigma = u * u.transpose() / t as f64;
            let (vals, vecs) = sym_eigen_desc(sigma);
            let scale = DMatrix::from_diagonal(&DVector::from_iterator(
                n,
                vals.iter().map(|v| v.max(0.0).sqrt()),
            ));
            Some(vecs * scale)
        }
        Resampling::CrossSections => None,
    };

    let draws: Vec<Result<Vec<f64>>> = map_indices(opts.b, |rep| {
        let mut rng = stream(opts.seed, rep as u64);
        let shocks = match &root {
            None => {
                let pick = Uniform::new(0, t).expect("t >= 1");
                let cols: Vec<usize> = (0..t).map(|_| pick.sample(&mut rng)).collect();
                DMatrix::from_fn(n, t, |i, s| u[(i, cols[s])])
            }
            Some(root) => {
                let z = DMatrix::from_fn(n, t, |_, _| StandardNormal.sample(&mut rng));
                root * z
            }
        };
        design.fit(&(&base + shocks)).map(|e| e.coefficients)
    });
    let draws: Vec<Vec<f64>> = draws
        .into_iter()
        .collect::<Result<_>>()
        .map_err(|e| Error::BootstrapDegenerate(format!("replication failed: {e}")))?;

    let k = est.k();
    let by_coef: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut v: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    let means: Vec<f64> = by_coef
        .iter()
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        .collect();
    let covariance = (0..k)
        .map(|a| {
            (0..k)
                .map(|b| {
                    draws
                        .iter()
                        .map(|d| (d[a] - means[a]) * (d[b] - means[b]))
                        .sum::<f64>()
                        / (draws.len() - 1) as f64
                })
                .collect()
        })
        .collect();
    let ci = opts
        .levels
        .iter()
        .map(|&level| ConfidenceSet {
            level,
            bounds: by_coef
                .iter()
                .map(|v| {
                    (
                        quantile_sorted(v, (1.0 - level) / 2.0),
                        quantile_sorted(v, (1.0 + level) / 2.0),
                    )
                })
                .collect(),
        })
        .collect();
    Ok(VarianceEstimate {
        scheme: Scheme::Bootstrap {
            b: opts.b,
            levels: opts.levels.clone(),
        },
        names: est.names.clone(),
        se: by_coef.iter().map(|v| sample_sd(v)).collect(),
        covariance,
        ci,
        draws: opts.keep_draws.then_some(draws),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{estimate, Heterogeneity};
    use crate::rng::normals;
    use crate::series::Panel;

    fn panel(n: usize, t: usize, f: impl Fn(usize, usize) -> f64) -> Panel {
        Panel::new(
            (0..n).map(|i| format!("u{i}")).collect(),
            (0..t as i32).map(|s| 1990 + s).collect(),
            DMatrix::from_fn(n, t, f),
        )
        .unwrap()
    }

    #[test]
    fn three_clusters_by_hand() {
        // one regressor, no intercept: bread = 1/sum x^2
        let x = DMatrix::from_column_slice(6, 1, &[1.0, 2.0, -1.0, 0.5, 3.0, -2.0]);
        let u = DVector::from_column_slice(&[0.1, -0.2, 0.3, 0.4, -0.5, 0.6]);
        let groups = [0, 0, 1, 1, 2, 2];
        let bread = DMatrix::from_element(1, 1, 1.0 / x.norm_squared());
        let v = cluster_covariance(
            &x,
            &bread,
            &u,
            &groups,
            3,
            ClusterOptions {
                small_sample: false,
            },
        )
        .unwrap();
        let s = [
            1.0 * 0.1 + 2.0 * -0.2,
            -0.3 + 0.5 * 0.4,
            3.0 * -0.5 + -2.0 * 0.6,
        ];
        let want = s.iter().map(|v| v * v).sum::<f64>() / x.norm_squared().powi(2);
        assert!((v[(0, 0)] - want).abs() < 1e-15);
        let vc = cluster_covariance(&x, &bread, &u, &groups, 3, ClusterOptions::default()).unwrap();
        assert!((vc[(0, 0)] - want * 1.5 * 5.0 / 5.0).abs() < 1e-15);
        assert!(matches!(
            cluster_covariance(&x, &bread, &u, &[0; 6], 1, ClusterOptions::default()),
            Err(Error::TooFewClusters(_))
        ));
    }

    #[test]
    fn cell_clustering_is_white() {
        let z = normals(&mut stream(61, 0), 60);
        let x = DMatrix::from_fn(30, 2, |r, c| if c == 0 { 1.0 } else { z[r] });
        let u: Vec<f64> = z[30..].to_vec();
        let bread = gram_inverse(&x).unwrap();
        let cells: Vec<usize> = (0..30).collect();
        let v = cluster_covariance(
            &x,
            &bread,
            &DVector::from_vec(u.clone()),
            &cells,
            30,
            ClusterOptions {
                small_sample: false,
            },
        )
        .unwrap();
        let white = newey_west_covariance(&x, &u, 0).unwrap();
        assert!((v - white).amax() < 1e-14);
    }

    #[test]
    fn nw_bandwidth_default() {
        assert_eq!(default_nw_bandwidth(60), 2);
        assert_eq!(default_nw_bandwidth(129), 3);
        assert_eq!(default_nw_bandwidth(1000), 7);
    }

    #[test]
    fn normal_critical_values() {
        assert!((normal_critical(0.90) - 1.6448536269514722).abs() < 1e-9);
        assert!((normal_critical(0.68) - 0.994457883209753).abs() < 1e-9);
    }

    fn small_fit(seed: u64, noise: f64) -> (PanelSpec, PanelEstimate) {
        let z = normals(&mut stream(seed, 0), 2 * 8 * 15);
        let x = panel(8, 15, |i, s| z[i * 15 + s]);
        let y = panel(8, 15, |i, s| {
            i as f64 - 0.5 * x.values[(i, s)] + noise * z[120 + i * 15 + s]
        });
        let spec = PanelSpec::static_model(&y, &x, None, Heterogeneity::Fe).unwrap();
        let est = estimate(&spec).unwrap();
        (spec, est)
    }

    #[test]
    fn bootstrap_is_deterministic_and_nested() {
        let (spec, est) = small_fit(62, 1.0);
        for resampling in [Resampling::CrossSections, Resampling::Gaussian] {
            let opts = BootstrapOptions {
                b: 99,
                seed: 5,
                resampling,
                ..Default::default()
            };
            let a = fixed_design_bootstrap(&spec, &est, &opts).unwrap();
            let b = fixed_design_bootstrap(&spec, &est, &opts).unwrap();
            assert_eq!(a.ci, b.ci);
            let (l68, h68) = a.interval(0, 0.68).unwrap();
            let (l90, h90) = a.interval(0, 0.90).unwrap();
            assert!(l90 <= l68 && l68 <= h68 && h68 <= h90);
        }
    }

    #[test]
    fn zero_residuals_collapse() {
        let (spec, est) = small_fit(63, 0.0);
        let v = fixed_design_bootstrap(
            &spec,
            &est,
            &BootstrapOptions {
                b: 99,
                ..Default::default()
            },
        )
        .unwrap();
        let (lo, hi) = v.interval(0, 0.90).unwrap();
        assert!((lo + 0.5).abs() < 1e-12 && (hi + 0.5).abs() < 1e-12);
    }

    #[test]
    fn too_few_replications() {
        let (spec, est) = small_fit(64, 1.0);
        assert!(fixed_design_bootstrap(
            &spec,
            &est,
            &BootstrapOptions {
                b: 50,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn twoway_is_psd() {
        let (_, est) = small_fit(65, 1.0);
        let v = cluster_se_twoway(&est).unwrap();
        let m = DMatrix::from_fn(1, 1, |i, j| v.covariance[i][j]);
        assert!(m[(0, 0)] >= -1e-12);
        assert!(v.se[0] > 0.0);
    }
}
