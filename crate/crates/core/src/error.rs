use thiserror::Error;

/// Errors produced by the decomposition, estimation and ingestion routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("fewer than 2 observations before cutoff year {cutoff}")]
    NoPreCutoffData { cutoff: i32 },

    #[error("panel has no population weights")]
    MissingWeights,

    #[error("lag {max_lag} is not smaller than series length {len}")]
    LagTooLarge { max_lag: usize, len: usize },

    #[error("polynomial a(L) is not invertible: {0}")]
    NonInvertiblePolynomial(String),

    #[error("smoother system is singular or ill-conditioned")]
    SingularSystem,

    #[error("covariance matrix is not positive definite")]
    SingularCovariance,

    #[error("optimizer failed: {0}")]
    OptimizerFailed(String),

    #[error("q = {q} exceeds T/2 for T = {t}")]
    QTooLarge { q: usize, t: usize },

    #[error("sample of {t} observations is too short (need at least {needed})")]
    SampleTooShort { t: usize, needed: usize },

    #[error("panel has rank zero (all values are zero)")]
    DegenerateRank,

    #[error("incompatible axes: {0}")]
    IncompatibleAxes(String),

    #[error("design matrix is rank deficient: {0}")]
    RankDeficientDesign(String),

    #[error("interactive fixed effects iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("autoregressive coefficient |alpha| = {alpha} implies explosive dynamics")]
    ExplosiveDynamics { alpha: f64 },

    #[error("too few clusters: {0}")]
    TooFewClusters(String),

    #[error("bootstrap is degenerate: {0}")]
    BootstrapDegenerate(String),

    #[error("series axes do not match: {0}")]
    AxisMismatch(String),

    #[error("need at least {needed} estimates, got {got}")]
    TooFewEstimates { needed: usize, got: usize },

    #[error("missing calibration input: {0}")]
    MissingCalibration(String),

    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("unknown element code {code:?} at line {line}")]
    UnknownElementCode { line: usize, code: String },

    #[error("missing year coverage: {0}")]
    MissingYearCoverage(String),

    #[error("non-positive level {value} for unit {unit} in {year}")]
    NonPositiveLevel { unit: String, year: i32, value: f64 },

    #[error("year ranges do not overlap")]
    EmptyIntersection,

    #[error("csv error: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
