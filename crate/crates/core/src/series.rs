//! Annual series and rectangular panels.
//!
//! Both containers are validated at construction: years are consecutive and
//! ascending, values are finite, and panel weights (when present) are
//! non-negative and sum to one.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// One unit's annual observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub unit_id: String,
    pub years: Vec<i32>,
    pub values: Vec<f64>,
    pub units_label: String,
    /// Cutoff year used by [`demean_pre_cutoff`], if the series has been demeaned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demeaned_before: Option<i32>,
}

impl TimeSeries {
    pub fn new(
        unit_id: impl Into<String>,
        years: Vec<i32>,
        values: Vec<f64>,
        units_label: impl Into<String>,
    ) -> Result<Self> {
        check_years(&years)?;
        if years.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} years but {} values",
                years.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at year {}",
                years[pos]
            )));
        }
        Ok(Self {
            unit_id: unit_id.into(),
            years,
            values,
            units_label: units_label.into(),
            demeaned_before: None,
        })
    }

    /// Series with consecutive years starting at `first_year`.
    pub fn from_values(
        unit_id: impl Into<String>,
        first_year: i32,
        values: Vec<f64>,
    ) -> Result<Self> {
        let years = (0..values.len() as i32).map(|k| first_year + k).collect();
        Self::new(unit_id, years, values, "")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first_year(&self) -> i32 {
        self.years[0]
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Same axis and metadata, new values.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> TimeSeries {
        debug_assert_eq!(values.len(), self.years.len());
        TimeSeries {
            unit_id: self.unit_id.clone(),
            years: self.years.clone(),
            values,
            units_label: self.units_label.clone(),
            demeaned_before: self.demeaned_before,
        }
    }

    /// Restricts the series to `[from, to]` (inclusive).
    pub fn window(&self, from: i32, to: i32) -> Result<TimeSeries> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&k| self.years[k] >= from && self.years[k] <= to)
            .collect();
        if idx.is_empty() {
            return Err(Error::EmptyIntersection);
        }
        let mut out = self.with_values(idx.iter().map(|&k| self.values[k]).collect());
        out.years = idx.iter().map(|&k| self.years[k]).collect();
        Ok(out)
    }
}

fn check_years(years: &[i32]) -> Result<()> {
    if let Some(w) = years.windows(2).find(|w| w[1] != w[0] + 1) {
        return Err(Error::InvalidInput(format!(
            "years must be consecutive and ascending ({} followed by {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// N x T rectangular panel, rows are units and columns are years.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub unit_ids: Vec<String>,
    pub years: Vec<i32>,
    pub values: DMatrix<f64>,
    pub weights: Option<Vec<f64>>,
    pub units_label: String,
}

#[derive(Serialize)]
struct PanelRepr<'a> {
    unit_ids: &'a [String],
    years: &'a [i32],
    /// one row per unit
    values: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: &'a Option<Vec<f64>>,
    units_label: &'a str,
}

impl Serialize for Panel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PanelRepr {
            unit_ids: &self.unit_ids,
            years: &self.years,
            values: (0..self.n()).map(|i| self.row_values(i)).collect(),
            weights: &self.weights,
            units_label: &self.units_label,
        }
        .serialize(s)
    }
}

impl Panel {
    pub fn new(unit_ids: Vec<String>, years: Vec<i32>, values: DMatrix<f64>) -> Result<Self> {
        check_years(&years)?;
        if values.nrows() != unit_ids.len() || values.ncols() != years.len() {
            return Err(Error::InvalidInput(format!(
                "values are {}x{} but axes are {}x{}",
                values.nrows(),
                values.ncols(),
                unit_ids.len(),
                years.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "panel contains non-finite values".into(),
            ));
        }
        Ok(Self {
            unit_ids,
            years,
            values,
            weights: None,
            units_label: String::new(),
        })
    }

    /// Builds a panel from series sharing one year axis.
    pub fn from_series(series: &[TimeSeries]) -> Result<Self> {
        let first = series
            .first()
            .ok_or_else(|| Error::InvalidInput("no series given".into()))?;
        let years = first.years.clone();
        for s in series {
            if s.years != years {
                return Err(Error::IncompatibleAxes(format!(
                    "unit {} has a different year axis",
                    s.unit_id
                )));
            }
        }
        let values = DMatrix::from_fn(series.len(), years.len(), |i, t| series[i].values[t]);
        let mut p = Self::new(
            series.iter().map(|s| s.unit_id.clone()).collect(),
            years,
            values,
        )?;
        p.units_label = first.units_label.clone();
        Ok(p)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n() {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} units",
                weights.len(),
                self.n()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidInput("weights must be non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidInput(format!("weights sum to {sum}, not 1")));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.units_label = label.into();
        self
    }

    pub fn n(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn t(&self) -> usize {
        self.years.len()
    }

    pub fn row_values(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn series(&self, i: usize) -> TimeSeries {
        TimeSeries {
            unit_id: self.unit_ids[i].clone(),
            years: self.years.clone(),
            values: self.row_values(i),
            units_label: self.units_label.clone(),
            demeaned_before: None,
        }
    }

    pub fn all_series(&self) -> Vec<TimeSeries> {
        (0..self.n()).map(|i| self.series(i)).collect()
    }

    pub fn unit_index(&self, unit: &str) -> Option<usize> {
        self.unit_ids.iter().position(|u| u == unit)
    }

    /// Same axes and weights, new values.
    pub fn with_values(&self, values: DMatrix<f64>) -> Panel {
        debug_assert_eq!(values.shape(), self.values.shape());
        Panel {
            unit_ids: self.unit_ids.clone(),
            years: self.years.clone(),
            values,
            weights: self.weights.clone(),
            units_label: self.units_label.clone(),
        }
    }

    /// Applies `f` to every unit's row.
    pub fn map_rows<F>(&self, mut f: F) -> Result<Panel>
    where
        F: FnMut(&TimeSeries) -> Result<Vec<f64>>,
    {
        let mut out = DMatrix::zeros(self.n(), self.t());
        for i in 0..self.n() {
            let row = f(&self.series(i))?;
            if row.len() != self.t() {
                return Err(Error::IncompatibleAxes(
                    "row function changed the length".into(),
                ));
            }
            for (t, v) in row.into_iter().enumerate() {
                out[(i, t)] = v;
            }
        }
        Ok(self.with_values(out))
    }

    /// Columns for years `[from, to]` (inclusive).
    pub fn window(&self, from: i32, to: i32) -> Result<Panel> {
        let cols: Vec<usize> = (0..self.t())
            .filter(|&k| self.years[k] >= from && self.years[k] <= to)
            .collect();
        if cols.is_empty() {
            return Err(Error::EmptyIntersection);
        }
        let values = DMatrix::from_fn(self.n(), cols.len(), |i, j| self.values[(i, cols[j])]);
        Ok(Panel {
            unit_ids: self.unit_ids.clone(),
            years: cols.iter().map(|&k| self.years[k]).collect(),
            values,
            weights: self.weights.clone(),
            units_label: self.units_label.clone(),
        })
    }

    /// Rows for the given unit ids, in that order.
    pub fn select_units(&self, units: &[String]) -> Result<Panel> {
        let idx = units
            .iter()
            .map(|u| {
                self.unit_index(u)
                    .ok_or_else(|| Error::IncompatibleAxes(format!("unit {u} not in panel")))
            })
            .collect::<Result<Vec<_>>>()?;
        let values = DMatrix::from_fn(idx.len(), self.t(), |i, t| self.values[(idx[i], t)]);
        let weights = self.weights.as_ref().map(|w| {
            let sel: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
            let s: f64 = sel.iter().sum();
            sel.iter().map(|v| v / s).collect()
        });
        Ok(Panel {
            unit_ids: units.to_vec(),
            years: self.years.clone(),
            values,
            weights,
            units_label: self.units_label.clone(),
        })
    }

    pub fn same_axes(&self, other: &Panel) -> bool {
        self.unit_ids == other.unit_ids && self.years == other.years
    }
}

/// Subtracts the mean of the observations strictly before `cutoff_year`.
pub fn demean_pre_cutoff(s: &TimeSeries, cutoff_year: i32) -> Result<TimeSeries> {
    let pre: Vec<f64> = s
        .years
        .iter()
        .zip(&s.values)
        .filter(|(y, _)| **y < cutoff_year)
        .map(|(_, v)| *v)
        .collect();
    if pre.len() < 2 {
        return Err(Error::NoPreCutoffData {
            cutoff: cutoff_year,
        });
    }
    let m = mean(&pre);
    let mut out = s.with_values(s.values.iter().map(|v| v - m).collect());
    out.demeaned_before = Some(cutoff_year);
    Ok(out)
}

/// Population-weighted cross-sectional average, labelled "aggregate".
pub fn weighted_aggregate(p: &Panel) -> Result<TimeSeries> {
    let w = p.weights.as_ref().ok_or(Error::MissingWeights)?;
    let values = (0..p.t())
        .map(|t| (0..p.n()).map(|i| w[i] * p.values[(i, t)]).sum())
        .collect();
    Ok(TimeSeries {
        unit_id: "aggregate".into(),
        years: p.years.clone(),
        values,
        units_label: p.units_label.clone(),
        demeaned_before: None,
    })
}

/// Sample autocorrelations at lags `1..=max_lag`, computed from deviations
/// around the full-sample mean and normalized by the lag-0 sum.
pub fn autocorrelation(s: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    autocorrelation_values(&s.values, max_lag)
}

pub fn autocorrelation_values(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if max_lag >= n {
        return Err(Error::LagTooLarge { max_lag, len: n });
    }
    let m = mean(x);
    let dev: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0: f64 = dev.iter().map(|d| d * d).sum();
    Ok((1..=max_lag)
        .map(|k| {
            if c0 == 0.0 {
                return 0.0;
            }
            let ck: f64 = (k..n).map(|t| dev[t] * dev[t - k]).sum();
            ck / c0
        })
        .collect())
}

/// Half-width of the white-noise band for the correlogram, `1/sqrt(T)`.
pub fn null_band(t: usize) -> f64 {
    1.0 / (t as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(values: &[f64], first: i32) -> TimeSeries {
        TimeSeries::from_values("u", first, values.to_vec()).unwrap()
    }

    #[test]
    fn rejects_gapped_years_and_nan() {
        assert!(TimeSeries::new("a", vec![2000, 2002], vec![1.0, 2.0], "").is_err());
        assert!(TimeSeries::new("a", vec![2000, 2001], vec![1.0, f64::NAN], "").is_err());
        assert!(TimeSeries::new("a", vec![2000, 2001], vec![1.0], "").is_err());
    }

    #[test]
    fn demean_constant_is_zero() {
        let s = ts(&[5.0; 10], 1970);
        let d = demean_pre_cutoff(&s, 1980).unwrap();
        assert!(d.values.iter().all(|v| *v == 0.0));
        assert_eq!(d.demeaned_before, Some(1980));
    }

    #[test]
    fn demean_small_example() {
        let s = ts(&[1.0, 2.0, 3.0, 4.0], 1978);
        let d = demean_pre_cutoff(&s, 1980).unwrap();
        assert_eq!(d.values, vec![-0.5, 0.5, 1.5, 2.5]);
    }

    #[test]
    fn demean_needs_two_pre_cutoff_years() {
        let s = ts(&[1.0, 2.0, 3.0], 1979);
        assert_eq!(
            demean_pre_cutoff(&s, 1980),
            Err(Error::NoPreCutoffData { cutoff: 1980 })
        );
    }

    #[test]
    fn demean_is_idempotent() {
        let s = ts(&[0.3, -1.2, 2.2, 0.1, 4.0, 5.5], 1976);
        let once = demean_pre_cutoff(&s, 1980).unwrap();
        let twice = demean_pre_cutoff(&once, 1980).unwrap();
        for (a, b) in once.values.iter().zip(&twice.values) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregate_examples() {
        let p = Panel::new(
            vec!["a".into(), "b".into()],
            vec![2000, 2001, 2002],
            DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 3.0, 3.0, 3.0]),
        )
        .unwrap();
        assert_eq!(weighted_aggregate(&p), Err(Error::MissingWeights));
        let p = p.with_weights(vec![0.5, 0.5]).unwrap();
        assert_eq!(weighted_aggregate(&p).unwrap().values, vec![2.0, 2.0, 2.0]);

        let single = Panel::new(
            vec!["a".into()],
            vec![2000, 2001],
            DMatrix::from_row_slice(1, 2, &[1.5, -2.0]),
        )
        .unwrap()
        .with_weights(vec![1.0])
        .unwrap();
        assert_eq!(weighted_aggregate(&single).unwrap().values, vec![1.5, -2.0]);
    }

    #[test]
    fn weights_are_validated() {
        let p = Panel::new(
            vec!["a".into(), "b".into()],
            vec![2000],
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        assert!(p.clone().with_weights(vec![0.6, 0.6]).is_err());
        assert!(p.clone().with_weights(vec![1.5, -0.5]).is_err());
        assert!(p.with_weights(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn null_band_at_129() {
        assert_eq!(format!("{:.3}", null_band(129)), "0.088");
    }

    #[test]
    fn alternating_series_has_lag_one_near_minus_one() {
        let x: Vec<f64> = (0..200)
            .map(|t| if t % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let r = autocorrelation_values(&x, 1).unwrap();
        assert!((r[0] + 0.99).abs() <= 0.01, "r1 = {}", r[0]);
    }

    #[test]
    fn lag_too_large() {
        assert_eq!(
            autocorrelation_values(&[1.0, 2.0, 3.0], 3),
            Err(Error::LagTooLarge { max_lag: 3, len: 3 })
        );
    }
}
