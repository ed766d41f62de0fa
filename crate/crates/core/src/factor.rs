//! Principal-component factors.
//!
//! [`first_pc`] extracts one factor from an `N x T` panel. The same routine
//! runs on the `N x q` matrix of cosine coefficients in
//! [`lowfreq_factor_model`], where the cosine index plays the role of time.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::mw::{mw_decompose_with, MwBasis};
use crate::linalg::sym_eigen_desc;
use crate::series::{Panel, TimeSeries};

/// Rank-`r` factor structure `X ~ Lambda F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    /// `r x T`, normalized so that `F F' / T = I`.
    pub factors: Vec<Vec<f64>>,
    /// `N x r`
    pub loadings: Vec<Vec<f64>>,
    pub r: usize,
    /// Share of each unit's second moment explained by the common component.
    pub communalities: Vec<f64>,
    pub standardized: bool,
}

impl FactorModel {
    pub fn factor(&self) -> &[f64] {
        &self.factors[0]
    }

    pub fn loading(&self, i: usize) -> f64 {
        self.loadings[i][0]
    }

    /// First-factor loadings rescaled to have cross-sectional mean one.
    pub fn normalized_loadings(&self) -> Vec<f64> {
        let l: Vec<f64> = self.loadings.iter().map(|row| row[0]).collect();
        let m = l.iter().sum::<f64>() / l.len() as f64;
        if m == 0.0 {
            return l;
        }
        l.iter().map(|v| v / m).collect()
    }

    /// `X - Lambda F` for the matrix the model was fitted on.
    pub fn residuals(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, t| {
            x[(i, t)]
                - (0..self.r)
                    .map(|k| self.loadings[i][k] * self.factors[k][t])
                    .sum::<f64>()
        })
    }
}

fn standardize_rows(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, t) = x.shape();
    let mut out = x.clone();
    for i in 0..n {
        let m = x.row(i).sum() / t as f64;
        let var = x.row(i).iter().map(|v| (v - m).powi(2)).sum::<f64>() / t as f64;
        let sd = var.sqrt();
        for j in 0..t {
            out[(i, j)] = if sd > 0.0 { (x[(i, j)] - m) / sd } else { 0.0 };
        }
    }
    out
}

/// Leading `r` principal components of a raw `N x T` matrix from its second
/// moments. The eigenproblem is solved on the smaller of `X'X` and `XX'`.
pub fn principal_components(x: &DMatrix<f64>, r: usize) -> Result<FactorModel> {
    let (n, t) = x.shape();
    if r == 0 || r > n.min(t) {
        return Err(Error::InvalidInput(format!(
            "cannot extract {r} factors from {n}x{t}"
        )));
    }
    if x.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateRank);
    }
    let tf = t as f64;
    // factors: r x T with F F' / T = I
    let mut factors = vec![vec![0.0; t]; r];
    if t <= n {
        let (vals, vecs) = sym_eigen_desc(x.tr_mul(x));
        if vals[r - 1] <= 0.0 {
            return Err(Error::DegenerateRank);
        }
        for k in 0..r {
            for s in 0..t {
                factors[k][s] = vecs[(s, k)] * tf.sqrt();
            }
        }
    } else {
        let (vals, vecs) = sym_eigen_desc(x * x.transpose());
        if vals[r - 1] <= 0.0 {
            return Err(Error::DegenerateRank);
        }
        for k in 0..r {
            // F_k = u_k' X / sqrt(eigval) scaled to F F'/T = 1
            let scale = tf.sqrt() / vals[k].sqrt();
            for s in 0..t {
                factors[k][s] = (0..n).map(|i| vecs[(i, k)] * x[(i, s)]).sum::<f64>() * scale;
            }
        }
    }
    // Sign: each factor co-moves positively with the cross-sectional mean.
    let xbar: Vec<f64> = (0..t).map(|s| x.column(s).sum() / n as f64).collect();
    for f in factors.iter_mut() {
        let c: f64 = f.iter().zip(&xbar).map(|(a, b)| a * b).sum();
        let flip = if c.abs() > 1e-14 {
            c < 0.0
        } else {
            // mean is orthogonal to the factor: fall back to the largest entry
            f.iter()
                .cloned()
                .fold(0.0, |acc: f64, v| if v.abs() > acc.abs() { v } else { acc })
                < 0.0
        };
        if flip {
            f.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let loadings: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            factors
                .iter()
                .map(|f| (0..t).map(|s| x[(i, s)] * f[s]).sum::<f64>() / tf)
                .collect()
        })
        .collect();
    let communalities = (0..n)
        .map(|i| {
            let total: f64 = x.row(i).iter().map(|v| v * v).sum();
            if total == 0.0 {
                return 0.0;
            }
            let common: f64 = (0..t)
                .map(|s| {
                    let c: f64 = (0..r).map(|k| loadings[i][k] * factors[k][s]).sum();
                    c * c
                })
                .sum();
            common / total
        })
        .collect();
    Ok(FactorModel {
        factors,
        loadings,
        r,
        communalities,
        standardized: false,
    })
}

/// First principal component of a panel, optionally after standardizing
/// every unit to zero mean and unit variance.
pub fn first_pc(p: &Panel, standardize: bool) -> Result<FactorModel> {
    if p.n() < 2 || p.t() < 2 {
        return Err(Error::InvalidInput(format!(
            "need N >= 2 and T >= 2, got {}x{}",
            p.n(),
            p.t()
        )));
    }
    let x = if standardize {
        standardize_rows(&p.values)
    } else {
        p.values.clone()
    };
    let mut m = principal_components(&x, 1)?;
    m.standardized = standardize;
    Ok(m)
}

/// Factor models on the cosine coefficients of two panels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LowFreqFactorModel {
    pub q: usize,
    pub years: Vec<i32>,
    pub unit_ids: Vec<String>,
    /// `N x q` coefficient matrices, row-major by unit.
    pub coeffs_x: Vec<Vec<f64>>,
    pub coeffs_y: Vec<Vec<f64>>,
    pub x: FactorModel,
    pub y: FactorModel,
    /// Residual blocks `U_X`, `U_Y` (`N x q`).
    pub resid_x: Vec<Vec<f64>>,
    pub resid_y: Vec<Vec<f64>>,
}

fn coefficient_matrix(p: &Panel, basis: &MwBasis) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = (0..p.n())
        .map(|i| basis.coefficients(&p.row_values(i)))
        .collect();
    DMatrix::from_fn(p.n(), basis.q(), |i, j| rows[i][j])
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// One factor per block of cosine coefficients `T^{-1} Psi' X_i` and
/// `T^{-1} Psi' dY_i`.
pub fn lowfreq_factor_model(x: &Panel, dy: &Panel, q: usize) -> Result<LowFreqFactorModel> {
    lowfreq_factor_model_with(x, dy, q, false)
}

pub fn lowfreq_factor_model_with(
    x: &Panel,
    dy: &Panel,
    q: usize,
    standardize: bool,
) -> Result<LowFreqFactorModel> {
    if !x.same_axes(dy) {
        return Err(Error::IncompatibleAxes(
            "temperature and growth panels must share units and years".into(),
        ));
    }
    if x.n() < 2 {
        return Err(Error::InvalidInput("need at least two units".into()));
    }
    let basis = MwBasis::new(x.t(), q)?;
    let cx = coefficient_matrix(x, &basis);
    let cy = coefficient_matrix(dy, &basis);
    let prep = |m: &DMatrix<f64>| {
        if standardize {
            standardize_rows(m)
        } else {
            m.clone()
        }
    };
    let (cx, cy) = (prep(&cx), prep(&cy));
    let mut fx = principal_components(&cx, 1)?;
    let mut fy = principal_components(&cy, 1)?;
    fx.standardized = standardize;
    fy.standardized = standardize;
    Ok(LowFreqFactorModel {
        q,
        years: x.years.clone(),
        unit_ids: x.unit_ids.clone(),
        resid_x: to_rows(&fx.residuals(&cx)),
        resid_y: to_rows(&fy.residuals(&cy)),
        coeffs_x: to_rows(&cx),
        coeffs_y: to_rows(&cy),
        x: fx,
        y: fy,
    })
}

/// Trend of a series split into its common and idiosyncratic parts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommonIdiosyncraticSplit {
    pub low: TimeSeries,
    pub common: TimeSeries,
    pub idiosyncratic: TimeSeries,
    /// The series minus its sample mean.
    pub mean_deviation: TimeSeries,
    pub loading: f64,
}

/// Splits the MW(`q`) trend of `series` into `mean + Psi (loading * F)` and
/// the remainder. `factor` is the coefficient-domain factor (length `q`); the
/// loading is the least-squares coefficient of the series' cosine
/// coefficients on it, which equals the principal-component loading for a
/// unit of the panel the factor was fitted on.
pub fn common_idio_split(
    series: &TimeSeries,
    factor: &FactorModel,
    q: usize,
) -> Result<CommonIdiosyncraticSplit> {
    let f = factor.factor();
    if f.len() != q {
        return Err(Error::IncompatibleAxes(format!(
            "factor has {} coefficients, q = {q}",
            f.len()
        )));
    }
    let basis = MwBasis::new(series.len(), q)?;
    let dec = mw_decompose_with(series, &basis)?;
    let coeffs = dec
        .coeffs
        .as_ref()
        .expect("MW decomposition carries coefficients");
    let ff: f64 = f.iter().map(|v| v * v).sum();
    let loading = coeffs.iter().zip(f).map(|(c, v)| c * v).sum::<f64>() / ff;
    let m = series.mean();
    let common_coeffs: Vec<f64> = f.iter().map(|v| loading * v).collect();
    let common: Vec<f64> = basis
        .synthesize(&common_coeffs)
        .into_iter()
        .map(|v| v + m)
        .collect();
    let idio: Vec<f64> = dec
        .low
        .values
        .iter()
        .zip(&common)
        .map(|(l, c)| l - c)
        .collect();
    Ok(CommonIdiosyncraticSplit {
        mean_deviation: series.with_values(series.values.iter().map(|v| v - m).collect()),
        common: series.with_values(common),
        idiosyncratic: series.with_values(idio),
        low: dec.low,
        loading,
    })
}

impl LowFreqFactorModel {
    /// Split for unit `i` of the temperature block.
    pub fn split_x(&self, series: &TimeSeries) -> Result<CommonIdiosyncraticSplit> {
        self.check_axis(series)?;
        common_idio_split(series, &self.x, self.q)
    }

    pub fn split_y(&self, series: &TimeSeries) -> Result<CommonIdiosyncraticSplit> {
        self.check_axis(series)?;
        common_idio_split(series, &self.y, self.q)
    }

    fn check_axis(&self, series: &TimeSeries) -> Result<()> {
        if series.years != self.years {
            return Err(Error::IncompatibleAxes(format!(
                "series {} does not cover the model years",
                series.unit_id
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normals, stream};

    fn panel(n: usize, t: usize, f: impl Fn(usize, usize) -> f64) -> Panel {
        Panel::new(
            (0..n).map(|i| format!("u{i}")).collect(),
            (0..t as i32).map(|k| 1960 + k).collect(),
            DMatrix::from_fn(n, t, f),
        )
        .unwrap()
    }

    #[test]
    fn identical_rows() {
        let f: Vec<f64> = normals(&mut stream(31, 0), 12);
        let p = panel(4, 12, |_, t| f[t]);
        let m = first_pc(&p, false).unwrap();
        let l0 = m.loading(0);
        assert!((0..4).all(|i| (m.loading(i) - l0).abs() < 1e-12));
        // factor proportional to f
        let ratio = m.factor()[0] / f[0];
        for t in 0..12 {
            assert!((m.factor()[t] - ratio * f[t]).abs() < 1e-10);
        }
        let ff: f64 = m.factor().iter().map(|v| v * v).sum::<f64>() / 12.0;
        assert!((ff - 1.0).abs() < 1e-10);
    }

    #[test]
    fn exact_rank_one_has_unit_communality() {
        let f: Vec<f64> = normals(&mut stream(32, 0), 15);
        let lam: Vec<f64> = normals(&mut stream(32, 1), 6);
        let p = panel(6, 15, |i, t| lam[i] * f[t]);
        let m = first_pc(&p, false).unwrap();
        assert!(m.communalities.iter().all(|c| (c - 1.0).abs() < 1e-10));
    }

    #[test]
    fn zero_panel_is_degenerate() {
        let p = panel(3, 5, |_, _| 0.0);
        assert_eq!(first_pc(&p, false).unwrap_err(), Error::DegenerateRank);
    }

    #[test]
    fn unit_order_does_not_matter() {
        let z = normals(&mut stream(33, 0), 40);
        let p = panel(5, 8, |i, t| z[i * 8 + t] + 0.3 * t as f64);
        let rev = panel(5, 8, |i, t| z[(4 - i) * 8 + t] + 0.3 * t as f64);
        let a = first_pc(&p, false).unwrap();
        let b = first_pc(&rev, false).unwrap();
        for t in 0..8 {
            assert!((a.factor()[t] - b.factor()[t]).abs() < 1e-10);
        }
    }

    #[test]
    fn loading_scales_with_unit() {
        let z = normals(&mut stream(34, 0), 60);
        let base = panel(6, 10, |i, t| z[i * 10 + t] + 0.5 * t as f64);
        let a = first_pc(&base, false).unwrap();
        let f = a.factor().to_vec();
        // keep the factor fixed: loadings are X F / T
        let scaled: Vec<f64> = (0..10).map(|t| 3.0 * base.values[(2, t)]).collect();
        let l = scaled.iter().zip(&f).map(|(x, g)| x * g).sum::<f64>() / 10.0;
        assert!((l - 3.0 * a.loading(2)).abs() < 1e-12);
    }

    #[test]
    fn split_is_additive_and_rank_one_has_no_idio() {
        let t = 40;
        let basis = MwBasis::new(t, 4).unwrap();
        let g = [1.0, -0.5, 0.3, 0.2];
        let path = basis.synthesize(&g);
        let lam = [0.5, 1.0, 1.5, 2.0];
        let x = panel(4, t, |i, s| lam[i] * path[s]);
        let dy = panel(4, t, |i, s| lam[3 - i] * path[s] + 0.1);
        let model = lowfreq_factor_model(&x, &dy, 4).unwrap();
        for i in 0..4 {
            let s = model.split_x(&x.series(i)).unwrap();
            assert!(s.idiosyncratic.values.iter().all(|v| v.abs() < 1e-8));
        }
        assert!(model.resid_x.iter().flatten().all(|v| v.abs() < 1e-10));

        let z = normals(&mut stream(35, 0), 4 * t);
        let noisy = panel(4, t, |i, s| z[i * t + s] + lam[i] * path[s]);
        let model = lowfreq_factor_model(&noisy, &noisy, 4).unwrap();
        let s = model.split_x(&noisy.series(1)).unwrap();
        for k in 0..t {
            let lhs = s.common.values[k] + s.idiosyncratic.values[k];
            assert!((lhs - s.low.values[k]).abs() < 1e-10);
        }
        assert!((s.loading - model.x.loading(1)).abs() < 1e-10);
    }

    #[test]
    fn zero_loading_gives_mean() {
        let t = 30;
        let basis = MwBasis::new(t, 3).unwrap();
        let path = basis.synthesize(&[1.0, 0.0, 0.0]);
        let x = panel(3, t, |i, s| (i + 1) as f64 * path[s]);
        let model = lowfreq_factor_model(&x, &x, 3).unwrap();
        // a series orthogonal to the factor: second cosine only, plus a level
        let other = basis.synthesize(&[0.0, 1.0, 0.0]);
        let series =
            TimeSeries::from_values("o", 1960, other.iter().map(|v| v + 2.0).collect()).unwrap();
        let s = model.split_x(&series).unwrap();
        assert!(s.loading.abs() < 1e-12);
        assert!(s.common.values.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }
}
