//! Low- and high-frequency decomposition of annual series, and panel
//! regressions of economic outcomes on the estimated components.
//!
//! The crate is organised bottom-up:
//!
//! * [`series`]: annual series and panel containers, demeaning, aggregation,
//!   correlograms.
//! * [`fracuc`]: the fractional unobserved-components smoother, likelihood
//!   and profile fit.
//! * [`filters`]: cosine-projection, Hodrick-Prescott, boosted HP and
//!   Hamilton trend extractors.
//! * [`factor`]: principal-component factors on raw panels and on cosine
//!   coefficients.
//! * [`panel`] and [`tsreg`]: regressions with unit, additive and
//!   interactive fixed effects, and single-unit regressions.
//! * [`inference`]: clustered and HAC variances, fixed-design bootstrap.
//! * [`montecarlo`]: the filter-accuracy and panel-coverage simulations.
//! * [`ingest`]: nClimDiv and long-CSV readers, growth rates, dataset assembly.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod decomposition;
pub mod error;
pub mod factor;
pub mod filters;
pub mod fracuc;
pub mod inference;
pub mod ingest;
pub mod linalg;
pub mod montecarlo;
pub mod optim;
pub mod panel;
pub mod par;
pub mod rng;
pub mod series;
pub mod synthetic;
pub mod tsreg;

pub use decomposition::{Decomposition, Method};
pub use error::{Error, Result};
pub use series::{Panel, TimeSeries};

/// Crate version, recorded in output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
