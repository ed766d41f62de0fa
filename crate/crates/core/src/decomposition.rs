use serde::{Deserialize, Serialize};

use crate::series::TimeSeries;

/// How a low/high split was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Mw {
        q: usize,
    },
    Hp {
        lambda: f64,
    },
    Bhp {
        lambda: f64,
        m: usize,
    },
    Jh {
        p: usize,
        h: usize,
    },
    Uc {
        d: f64,
        sigma_l: f64,
        sigma_h: f64,
        a: Vec<f64>,
    },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Mw { q } => format!("MW{q}"),
            Method::Hp { lambda } => format!("HP({lambda})"),
            Method::Bhp { lambda, m } => format!("bHP({lambda},m={m})"),
            Method::Jh { p, h } => format!("JH(p={p},h={h})"),
            Method::Uc { sigma_l, .. } => format!("UC{sigma_l}"),
        }
    }
}

/// Paired low- and high-frequency components of one series.
///
/// For every method except Hamilton's, `low` and `high` share the source
/// axis. Hamilton's components start `p + h` years later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub low: TimeSeries,
    pub high: TimeSeries,
    pub method: Method,
    /// Cosine coefficients `T^{-1} Psi' z` (MW only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
}

impl Decomposition {
    /// Number of leading source years without a defined component.
    pub fn undefined_prefix(&self, source: &TimeSeries) -> usize {
        (self.low.first_year() - source.first_year()).max(0) as usize
    }

    /// Largest |low + high - source| over the defined range.
    pub fn additivity_error(&self, source: &TimeSeries) -> f64 {
        let off = self.undefined_prefix(source);
        self.low
            .values
            .iter()
            .zip(&self.high.values)
            .zip(&source.values[off..])
            .map(|((l, h), z)| (l + h - z).abs())
            .fold(0.0, f64::max)
    }
}
