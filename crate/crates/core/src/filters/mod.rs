//! Nonparametric trend extractors.

pub mod hamilton;
pub mod hp;
pub mod mw;

use serde::{Deserialize, Serialize};

pub use hamilton::{jh_decompose, jh_regression};
pub use hp::{bhp_decompose, hp_decompose, BhpStopping, HpSmoother};
pub use mw::{default_q, mw_decompose, mw_decompose_with, mw_periodicity, MwBasis};

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Choice of trend extractor and its tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum FilterConfig {
    Mw { q: usize },
    Hp { lambda: f64 },
    Bhp { lambda: f64, stopping: BhpStopping },
    Jh { p: usize, h: usize },
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterConfig::Mw { q } if q < 1 => Err(Error::InvalidInput("q must be >= 1".into())),
            FilterConfig::Hp { lambda } | FilterConfig::Bhp { lambda, .. } if !(lambda > 0.0) => {
                Err(Error::InvalidInput("lambda must be > 0".into()))
            }
            FilterConfig::Jh { h, .. } if h < 1 => {
                Err(Error::InvalidInput("h must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn decompose(&self, z: &TimeSeries) -> Result<Decomposition> {
        self.validate()?;
        match *self {
            FilterConfig::Mw { q } => mw_decompose(z, q),
            FilterConfig::Hp { lambda } => hp_decompose(z, lambda),
            FilterConfig::Bhp { lambda, stopping } => bhp_decompose(z, lambda, stopping),
            FilterConfig::Jh { p, h } => jh_decompose(z, p, h),
        }
    }

    pub fn label(&self) -> String {
        match self {
            FilterConfig::Mw { q } => format!("MW{q}"),
            FilterConfig::Hp { lambda } => format!("HP({lambda})"),
            FilterConfig::Bhp { lambda, .. } => format!("bHP({lambda})"),
            FilterConfig::Jh { p, h } => format!("JH({p},{h})"),
        }
    }
}
