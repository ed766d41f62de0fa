//! Readers and writers for the input formats, growth-rate construction and
//! assembly of the regression dataset.
//!
//! nClimDiv records are one line per (area, element, year): a 10-digit
//! division identifier `SSDDEEYYYY` or an 11-digit county identifier
//! `SSCCCEEYYYY`, followed by twelve monthly values. `-99.90` marks a
//! missing month.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Read;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{demean_pre_cutoff, Panel};

pub const MISSING: f64 = -99.90;
pub const AVG_TEMPERATURE: u8 = 2;
pub const DEFAULT_CUTOFF: i32 = 1980;

/// Element codes that occur in nClimDiv files.
const KNOWN_ELEMENTS: [u8; 16] = [1, 2, 5, 6, 7, 8, 25, 26, 27, 28, 71, 72, 73, 74, 75, 76];

/// Postal abbreviations of the contiguous states in nClimDiv order (codes 1-48).
pub const STATE_CODES: [&str; 48] = [
    "AL", "AZ", "AR", "CA", "CO", "CT", "DE", "FL", "GA", "ID", "IL", "IN", "IA", "KS", "KY", "LA",
    "ME", "MD", "MA", "MI", "MN", "MS", "MO", "MT", "NE", "NV", "NH", "NJ", "NM", "NY", "NC", "ND",
    "OH", "OK", "OR", "PA", "RI", "SC", "SD", "TN", "TX", "UT", "VT", "VA", "WA", "WV", "WI", "WY",
];

pub fn state_abbrev(code: u8) -> Option<&'static str> {
    (1..=48)
        .contains(&code)
        .then(|| STATE_CODES[code as usize - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// `SSDDEEYYYY`
    Division,
    /// `SSCCCEEYYYY`
    County,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NclimdivRecord {
    pub layout: Layout,
    pub state: u8,
    /// Division or county code within the state.
    pub area: u16,
    pub element: u8,
    pub year: i32,
    pub months: [Option<f64>; 12],
}

impl NclimdivRecord {
    /// `SSDD` or `SSCCC`, the key used for sub-state weights.
    pub fn area_id(&self) -> String {
        match self.layout {
            Layout::Division => format!("{:02}{:02}", self.state, self.area),
            Layout::County => format!("{:02}{:03}", self.state, self.area),
        }
    }

    fn identifier(&self) -> String {
        format!("{}{:02}{:04}", self.area_id(), self.element, self.year)
    }
}

fn digits(s: &str, line: usize) -> Result<u32> {
    s.parse::<u32>().map_err(|_| Error::MalformedRecord {
        line,
        reason: format!("non-numeric identifier field {s:?}"),
    })
}

/// Parses every record of an nClimDiv file.
pub fn parse_records(text: &str) -> Result<Vec<NclimdivRecord>> {
    let mut out = Vec::new();
    let mut layout: Option<Layout> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut fields = raw.split_whitespace();
        let id = fields.next().unwrap_or_default();
        if !id.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::MalformedRecord {
                line,
                reason: format!("identifier {id:?} is not numeric"),
            });
        }
        let this = match id.len() {
            10 => Layout::Division,
            11 => Layout::County,
            n => {
                return Err(Error::MalformedRecord {
                    line,
                    reason: format!("identifier has {n} characters, expected 10 or 11"),
                })
            }
        };
        if let Some(l) = layout {
            if l != this {
                return Err(Error::MalformedRecord {
                    line,
                    reason: "division and county records mixed in one file".into(),
                });
            }
        }
        layout = Some(this);
        let area_len = if this == Layout::Division { 2 } else { 3 };
        let state = digits(&id[0..2], line)? as u8;
        let area = digits(&id[2..2 + area_len], line)? as u16;
        let element_str = &id[2 + area_len..4 + area_len];
        let element = digits(element_str, line)? as u8;
        if !KNOWN_ELEMENTS.contains(&element) {
            return Err(Error::UnknownElementCode {
                line,
                code: element_str.to_string(),
            });
        }
        let year = digits(&id[4 + area_len..], line)? as i32;
        let values: Vec<&str> = fields.collect();
        if values.len() != 12 {
            return Err(Error::MalformedRecord {
                line,
                reason: format!("{} monthly values, expected 12", values.len()),
            });
        }
        let mut months = [None; 12];
        for (m, v) in values.iter().enumerate() {
            let x: f64 = v.parse().map_err(|_| Error::MalformedRecord {
                line,
                reason: format!("month {} value {v:?} is not a number", m + 1),
            })?;
            months[m] = if (x - MISSING).abs() < 1e-9 || !x.is_finite() {
                None
            } else {
                Some(x)
            };
        }
        out.push(NclimdivRecord {
            layout: this,
            state,
            area,
            element,
            year,
            months,
        });
    }
    Ok(out)
}

/// Writes records back in the fixed-width layout (`%7.2f` per month).
pub fn write_records(records: &[NclimdivRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.identifier());
        for m in &r.months {
            let _ = write!(s, "{:7.2}", m.unwrap_or(MISSING));
        }
        s.push('\n');
    }
    s
}

/// What happened to individual area-years during ingestion.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestReport {
    pub layout: Option<Layout>,
    pub records: usize,
    /// `(area, year, month)` of months filled from their neighbours.
    pub interpolated: Vec<(String, i32, usize)>,
    /// `(area, year, missing months)` of rejected area-years.
    pub rejected: Vec<(String, i32, usize)>,
    /// State codes outside the contiguous 48.
    pub dropped_states: Vec<u8>,
}

/// Annual mean of the monthly values. A single missing month is replaced by
/// the mean of its neighbours; with more missing months the year is dropped.
pub fn annualize(months: &[Option<f64>; 12]) -> (Option<f64>, Option<usize>) {
    let missing: Vec<usize> = (0..12).filter(|&m| months[m].is_none()).collect();
    match missing.len() {
        0 => (
            Some(months.iter().map(|v| v.unwrap()).sum::<f64>() / 12.0),
            None,
        ),
        1 => {
            let m = missing[0];
            let neighbours: Vec<f64> = [m.checked_sub(1), (m + 1 < 12).then_some(m + 1)]
                .into_iter()
                .flatten()
                .filter_map(|j| months[j])
                .collect();
            let fill = neighbours.iter().sum::<f64>() / neighbours.len() as f64;
            let total: f64 = months.iter().flatten().sum::<f64>() + fill;
            (Some(total / 12.0), Some(m))
        }
        _ => (None, None),
    }
}

/// Average-temperature panel (states x years, deg F) from an nClimDiv file.
/// Areas are combined with `weights` keyed by area id (`SSDD` or `SSCCC`),
/// equal weights when none are given. Only the contiguous 48 states are kept.
pub fn parse_nclimdiv(
    bytes: &[u8],
    weights: Option<&HashMap<String, f64>>,
) -> Result<(Panel, IngestReport)> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::MalformedRecord {
        line: 0,
        reason: format!("not UTF-8: {e}"),
    })?;
    let records = parse_records(text)?;
    let mut report = IngestReport {
        records: records.len(),
        layout: records.first().map(|r| r.layout),
        ..Default::default()
    };
    // state -> year -> (weighted sum, weight)
    let mut acc: BTreeMap<u8, BTreeMap<i32, (f64, f64)>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.element == AVG_TEMPERATURE) {
        if state_abbrev(r.state).is_none() {
            if !report.dropped_states.contains(&r.state) {
                report.dropped_states.push(r.state);
            }
            continue;
        }
        let id = r.area_id();
        let (annual, filled) = annualize(&r.months);
        let Some(v) = annual else {
            let missing = r.months.iter().filter(|m| m.is_none()).count();
            report.rejected.push((id, r.year, missing));
            continue;
        };
        if let Some(m) = filled {
            report.interpolated.push((id.clone(), r.year, m + 1));
        }
        let w = match weights {
            Some(map) => match map.get(&id) {
                Some(w) => *w,
                None => continue,
            },
            None => 1.0,
        };
        if w <= 0.0 {
            continue;
        }
        let cell = acc
            .entry(r.state)
            .or_default()
            .entry(r.year)
            .or_insert((0.0, 0.0));
        cell.0 += w * v;
        cell.1 += w;
    }
    if acc.is_empty() {
        return Err(Error::MissingYearCoverage(
            "no average-temperature records for the contiguous states".into(),
        ));
    }
    let first = acc
        .values()
        .filter_map(|m| m.keys().next())
        .min()
        .copied()
        .unwrap();
    let last = acc
        .values()
        .filter_map(|m| m.keys().last())
        .max()
        .copied()
        .unwrap();
    let years: Vec<i32> = (first..=last).collect();
    let states: Vec<u8> = acc.keys().copied().collect();
    let mut values = DMatrix::zeros(states.len(), years.len());
    for (i, s) in states.iter().enumerate() {
        for (t, y) in years.iter().enumerate() {
            match acc[s].get(y) {
                Some((sum, w)) if *w > 0.0 => values[(i, t)] = sum / w,
                _ => {
                    return Err(Error::MissingYearCoverage(format!(
                        "{} has no usable data for {y}",
                        state_abbrev(*s).unwrap()
                    )))
                }
            }
        }
    }
    let ids = states
        .iter()
        .map(|s| state_abbrev(*s).unwrap().to_string())
        .collect();
    Ok((Panel::new(ids, years, values)?.with_label("degF"), report))
}

pub fn read_nclimdiv_file(
    path: &std::path::Path,
    weights: Option<&HashMap<String, f64>>,
) -> Result<(Panel, IngestReport)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    parse_nclimdiv(&bytes, weights)
}

#[derive(Debug, Serialize, Deserialize)]
struct LongRow {
    unit: String,
    year: i32,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightRow {
    unit: String,
    weight: f64,
}

/// Rectangular panel from a `unit,year,value` CSV. Units keep their order of
/// first appearance.
pub fn read_long_csv<R: std::io::Read>(reader: R) -> Result<Panel> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut order: Vec<String> = Vec::new();
    let mut cells: HashMap<String, BTreeMap<i32, f64>> = HashMap::new();
    for row in rdr.deserialize::<LongRow>() {
        let row = row?;
        if !row.value.is_finite() {
            return Err(Error::InvalidInput(format!(
                "{} {}: non-finite value",
                row.unit, row.year
            )));
        }
        let entry = cells.entry(row.unit.clone()).or_insert_with(|| {
            order.push(row.unit.clone());
            BTreeMap::new()
        });
        if entry.insert(row.year, row.value).is_some() {
            return Err(Error::InvalidInput(format!(
                "duplicate row for {} {}",
                row.unit, row.year
            )));
        }
    }
    if order.is_empty() {
        return Err(Error::InvalidInput("CSV has no rows".into()));
    }
    let first = cells
        .values()
        .filter_map(|m| m.keys().next())
        .min()
        .copied()
        .unwrap();
    let last = cells
        .values()
        .filter_map(|m| m.keys().last())
        .max()
        .copied()
        .unwrap();
    let years: Vec<i32> = (first..=last).collect();
    let mut values = DMatrix::zeros(order.len(), years.len());
    for (i, u) in order.iter().enumerate() {
        for (t, y) in years.iter().enumerate() {
            values[(i, t)] = *cells[u]
                .get(y)
                .ok_or_else(|| Error::MissingYearCoverage(format!("{u} has no value for {y}")))?;
        }
    }
    Panel::new(order, years, values)
}

pub fn write_long_csv<W: std::io::Write>(p: &Panel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for i in 0..p.n() {
        for (t, y) in p.years.iter().enumerate() {
            w.serialize(LongRow {
                unit: p.unit_ids[i].clone(),
                year: *y,
                value: p.values[(i, t)],
            })?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

/// `unit,weight` CSV.
pub fn read_weights_csv<R: std::io::Read>(reader: R) -> Result<HashMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = HashMap::new();
    for row in rdr.deserialize::<WeightRow>() {
        let row = row?;
        if !(row.weight >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "negative weight for {}",
                row.unit
            )));
        }
        out.insert(row.unit, row.weight);
    }
    Ok(out)
}

pub fn write_weights_csv<W: std::io::Write>(
    units: &[String],
    weights: &[f64],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (u, v) in units.iter().zip(weights) {
        w.serialize(WeightRow {
            unit: u.clone(),
            weight: *v,
        })?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

/// `100 (log Y_t - log Y_{t-1})`; the first year is dropped.
pub fn build_growth(levels: &Panel) -> Result<Panel> {
    if levels.t() < 2 {
        return Err(Error::SampleTooShort {
            t: levels.t(),
            needed: 2,
        });
    }
    for i in 0..levels.n() {
        for (t, y) in levels.years.iter().enumerate() {
            let v = levels.values[(i, t)];
            if !(v > 0.0) {
                return Err(Error::NonPositiveLevel {
                    unit: levels.unit_ids[i].clone(),
                    year: *y,
                    value: v,
                });
            }
        }
    }
    let values = DMatrix::from_fn(levels.n(), levels.t() - 1, |i, t| {
        100.0 * (levels.values[(i, t + 1)].ln() - levels.values[(i, t)].ln())
    });
    let mut out = Panel::new(levels.unit_ids.clone(), levels.years[1..].to_vec(), values)?;
    out.weights = levels.weights.clone();
    out.units_label = "pct".into();
    Ok(out)
}

/// Temperature and growth panels on common units, ready for estimation.
#[derive(Debug, Clone, Serialize)]
pub struct Dataset {
    /// Demeaned temperature over its full available sample, which is what
    /// the components are estimated on.
    pub temperature: Panel,
    /// Growth restricted to the common years.
    pub growth: Panel,
    /// First and last year shared by both panels.
    pub regression_years: (i32, i32),
    pub cutoff: i32,
    pub provenance: Vec<String>,
}

impl Dataset {
    /// Temperature restricted to the regression years.
    pub fn temperature_window(&self) -> Result<Panel> {
        self.temperature
            .window(self.regression_years.0, self.regression_years.1)
    }
}

/// Demeans temperature before `cutoff` per unit, keeps units present in both
/// panels, restricts growth to the common years and attaches weights
/// (renormalized over the kept units).
pub fn assemble_dataset(
    x: &Panel,
    y: &Panel,
    weights: Option<&HashMap<String, f64>>,
    cutoff: i32,
) -> Result<Dataset> {
    let mut provenance = Vec::new();
    let units: Vec<String> = x
        .unit_ids
        .iter()
        .filter(|u| y.unit_index(u).is_some())
        .cloned()
        .collect();
    if units.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let dropped: Vec<&String> = x
        .unit_ids
        .iter()
        .chain(&y.unit_ids)
        .filter(|u| !units.contains(u))
        .collect();
    if !dropped.is_empty() {
        provenance.push(format!("dropped units without both series: {dropped:?}"));
    }
    let from = x.years[0].max(y.years[0]);
    let to = x.years[x.t() - 1].min(y.years[y.t() - 1]);
    if from > to {
        return Err(Error::EmptyIntersection);
    }
    let xs = x.select_units(&units)?;
    let ys = y.select_units(&units)?;
    let demeaned = xs.map_rows(|s| demean_pre_cutoff(s, cutoff).map(|d| d.values))?;
    provenance.push(format!(
        "temperature demeaned by unit using {}..{} means",
        xs.years[0],
        cutoff - 1
    ));
    let mut growth = ys.window(from, to)?;
    provenance.push(format!(
        "regression sample {from}..{to}, N = {}, T = {}",
        units.len(),
        to - from + 1
    ));
    let mut temperature = demeaned;
    let w = match weights {
        Some(map) => {
            let w: Vec<f64> = units
                .iter()
                .map(|u| map.get(u).copied().ok_or(Error::MissingWeights))
                .collect::<Result<_>>()?;
            let total: f64 = w.iter().sum();
            provenance.push("weights renormalized over kept units".into());
            Some(w.iter().map(|v| v / total).collect::<Vec<_>>())
        }
        None => x.weights.as_ref().map(|_| xs.weights.clone().unwrap()),
    };
    if let Some(w) = w {
        temperature = temperature.with_weights(w.clone())?;
        growth = growth.with_weights(w)?;
    }
    Ok(Dataset {
        temperature,
        growth,
        regression_years: (from, to),
        cutoff,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, months: [f64; 12]) -> String {
        let mut s = id.to_string();
        for m in months {
            let _ = write!(s, "{m:7.2}");
        }
        s
    }

    #[test]
    fn constant_months_annualize_to_the_constant() {
        let text = record("0101021990", [55.5; 12]);
        let (p, _) = parse_nclimdiv(text.as_bytes(), None).unwrap();
        assert_eq!(p.unit_ids, vec!["AL"]);
        assert!((p.values[(0, 0)] - 55.5).abs() < 1e-12);
    }

    #[test]
    fn missing_months_policy() {
        let mut one = [50.0; 12];
        one[3] = MISSING;
        let mut two = [50.0; 12];
        two[0] = MISSING;
        two[7] = MISSING;
        let text = [
            record("04001022001", one),
            record("04002022001", two),
            record("04002022002", [51.0; 12]),
            record("04001022002", [49.0; 12]),
        ]
        .join("\n");
        let (p, report) = parse_nclimdiv(text.as_bytes(), None).unwrap();
        assert_eq!(p.unit_ids, vec!["CA"]);
        // 2001: county 001 interpolated, county 002 rejected
        assert!((p.values[(0, 0)] - 50.0).abs() < 1e-12);
        assert!((p.values[(0, 1)] - 50.0).abs() < 1e-12);
        assert_eq!(report.interpolated, vec![("04001".to_string(), 2001, 4)]);
        assert_eq!(report.rejected, vec![("04002".to_string(), 2001, 2)]);
        assert_eq!(report.layout, Some(Layout::County));
    }

    #[test]
    fn weights_and_dropped_states() {
        let text = [
            record("0101021990", [40.0; 12]),
            record("0102021990", [60.0; 12]),
            record("5001021990", [10.0; 12]),
            record("0101011990", [3.0; 12]),
        ]
        .join("\n");
        let w: HashMap<String, f64> = [("0101".to_string(), 3.0), ("0102".to_string(), 1.0)].into();
        let (p, report) = parse_nclimdiv(text.as_bytes(), Some(&w)).unwrap();
        assert!((p.values[(0, 0)] - 45.0).abs() < 1e-12);
        assert_eq!(report.dropped_states, vec![50]);
    }

    #[test]
    fn bad_records() {
        assert!(matches!(
            parse_records(&record("0101991990", [1.0; 12])),
            Err(Error::UnknownElementCode { line: 1, .. })
        ));
        assert!(matches!(
            parse_records("0101021990 1.0 2.0"),
            Err(Error::MalformedRecord { .. })
        ));
        assert!(matches!(
            parse_records(&record("01010219", [1.0; 12])),
            Err(Error::MalformedRecord { .. })
        ));
        let gap = [
            record("0101021990", [1.0; 12]),
            record("0101021992", [1.0; 12]),
        ]
        .join("\n");
        assert!(matches!(
            parse_nclimdiv(gap.as_bytes(), None),
            Err(Error::MissingYearCoverage(_))
        ));
    }

    #[test]
    fn records_round_trip() {
        let mut m = [12.34; 12];
        m[5] = MISSING;
        let text = [record("04001022001", m), record("48001022001", [-3.5; 12])].join("\n");
        let recs = parse_records(&text).unwrap();
        let again = parse_records(&write_records(&recs)).unwrap();
        assert_eq!(recs, again);
        let (a, _) = parse_nclimdiv(text.as_bytes(), None).unwrap();
        let (b, _) = parse_nclimdiv(write_records(&recs).as_bytes(), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn growth_rates() {
        let p = Panel::new(
            vec!["a".into(), "b".into()],
            vec![2000, 2001, 2002],
            DMatrix::from_row_slice(2, 3, &[5.0, 5.0, 5.0, 1.0, 2.0, 4.0]),
        )
        .unwrap();
        let g = build_growth(&p).unwrap();
        assert_eq!(g.years, vec![2001, 2002]);
        assert!(g.values.row(0).iter().all(|v| *v == 0.0));
        assert!((g.values[(1, 1)] - 69.31).abs() < 0.005);
        let bad = p.with_values(DMatrix::from_row_slice(
            2,
            3,
            &[5.0, 0.0, 5.0, 1.0, 2.0, 4.0],
        ));
        assert!(matches!(
            build_growth(&bad),
            Err(Error::NonPositiveLevel { year: 2001, .. })
        ));
    }

    #[test]
    fn long_csv_round_trip() {
        let p = Panel::new(
            vec!["x".into(), "y".into()],
            vec![1990, 1991],
            DMatrix::from_row_slice(2, 2, &[0.1, 0.2, -1.5, 3.25]),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_long_csv(&p, &mut buf).unwrap();
        assert_eq!(read_long_csv(buf.as_slice()).unwrap(), p);
        let holed = "unit,year,value\nx,1990,1\nx,1991,2\ny,1990,3\n";
        assert!(matches!(
            read_long_csv(holed.as_bytes()),
            Err(Error::MissingYearCoverage(_))
        ));
    }

    #[test]
    fn assemble_intersects_and_is_idempotent() {
        let x = Panel::new(
            vec!["a".into(), "b".into()],
            (1970..1990).collect(),
            DMatrix::from_fn(2, 20, |i, t| (i * t) as f64 * 0.1),
        )
        .unwrap();
        let y = Panel::new(
            vec!["b".into(), "a".into()],
            (1975..1995).collect(),
            DMatrix::from_fn(2, 20, |i, t| (i + t) as f64),
        )
        .unwrap();
        let w: HashMap<String, f64> = [("a".to_string(), 1.0), ("b".to_string(), 3.0)].into();
        let d = assemble_dataset(&x, &y, Some(&w), 1980).unwrap();
        assert_eq!(d.regression_years, (1975, 1989));
        assert_eq!(d.growth.unit_ids, vec!["a", "b"]);
        assert_eq!(d.growth.weights, Some(vec![0.25, 0.75]));
        assert_eq!(d.temperature.t(), 20);
        let again = assemble_dataset(&d.temperature, &d.growth, Some(&w), 1980).unwrap();
        assert!((again.temperature.values.clone() - &d.temperature.values).amax() < 1e-12);
        assert_eq!(again.growth, d.growth);
        let far = y.with_values(y.values.clone());
        let far = Panel::new(far.unit_ids.clone(), (2000..2020).collect(), far.values).unwrap();
        assert_eq!(
            assemble_dataset(&x, &far, None, 1980).unwrap_err(),
            Error::EmptyIntersection
        );
    }
}
