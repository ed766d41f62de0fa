mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lowfreq::Error;

#[derive(Parser, Debug)]
#[command(
    name = "lowfreq",
    version,
    about = "Low/high-frequency decomposition and panel regressions of climate-economy data"
)]
struct Cli {
    /// Worker threads for replication-level parallelism (0 = all cores).
    #[arg(long, global = true, env = "LOWFREQ_THREADS", default_value_t = 0)]
    threads: usize,

    /// Directory for all written artifacts.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse nClimDiv or long-CSV input into the canonical long CSV.
    Ingest(IngestArgs),
    /// Split each series into low- and high-frequency components.
    Decompose(DecomposeArgs),
    /// Fit the fractional unobserved-components model per unit.
    UcFit(UcFitArgs),
    /// One-factor models on the cosine coefficients of temperature and growth.
    Factors(FactorsArgs),
    /// Panel regression of growth on temperature components.
    Panel(PanelArgs),
    /// Single-unit or aggregate time-series regression.
    TsReg(TsRegArgs),
    /// Kernel density of per-unit time-series estimates.
    Density(DensityArgs),
    /// Filter-accuracy simulation.
    McFilters(McFiltersArgs),
    /// Panel bias and coverage simulation.
    McPanel(McPanelArgs),
    /// Write the seeded synthetic sample dataset.
    Synth(SynthArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Nclimdiv,
    Csv,
}

#[derive(Args, Debug, Serialize)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub source: Source,
    #[arg(long)]
    pub input: PathBuf,
    /// `unit,weight` CSV of unit weights attached to the output panel.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// `unit,weight` CSV keyed by nClimDiv area id (`SSDD` or `SSCCC`),
    /// used to combine divisions or counties into states.
    #[arg(long)]
    pub area_weights: Option<PathBuf>,
    /// Demean each unit on the years before this one.
    #[arg(long)]
    pub cutoff: Option<i32>,
    /// Treat the input as levels and write growth rates `100 dlog`.
    #[arg(long)]
    pub growth: bool,
    #[arg(long, default_value = "ingested.csv")]
    pub output: String,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Mw,
    Hp,
    Bhp,
    Jh,
}

#[derive(Args, Debug, Serialize)]
pub struct DecomposeArgs {
    /// Long CSV `unit,year,value`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// MW cosine count (default round(2T/32)).
    #[arg(long)]
    pub q: Option<usize>,
    /// HP / bHP smoothing parameter.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// bHP passes; information-criterion stopping when absent.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    #[arg(long, default_value_t = 2)]
    pub h: usize,
    /// Scale value, low and high by the series' mean and sd.
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, default_value = "decomposition.csv")]
    pub output: String,
}

#[derive(Args, Debug, Serialize)]
pub struct UcFitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub sigma_l: f64,
    /// MA order of the high-frequency component.
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    #[arg(long, default_value_t = 1980)]
    pub cutoff: i32,
    /// Comma-separated units (default: all).
    #[arg(long, value_delimiter = ',')]
    pub units: Vec<String>,
    /// Fit the weighted aggregate instead of the units.
    #[arg(long)]
    pub aggregate: bool,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value = "uc_fit.json")]
    pub output: String,
}

#[derive(Args, Debug, Serialize, Clone)]
pub struct DataArgs {
    /// Long CSV of temperature levels.
    #[arg(long)]
    pub temperature: PathBuf,
    /// Long CSV of growth rates.
    #[arg(long, conflicts_with = "levels")]
    pub growth: Option<PathBuf>,
    /// Long CSV of output levels (growth is computed).
    #[arg(long)]
    pub levels: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 1980)]
    pub cutoff: i32,
}

#[derive(Args, Debug, Serialize)]
pub struct FactorsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 4)]
    pub q: usize,
    #[arg(long)]
    pub standardize: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Fe,
    Afe,
    Ife,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum ResamplingArg {
    CrossSections,
    Gaussian,
}

#[derive(Args, Debug, Serialize)]
pub struct PanelArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "fe")]
    pub model: ModelArg,
    /// ADL(1,1) specification with the lagged dependent variable.
    #[arg(long, conflicts_with = "interact")]
    pub dynamic: bool,
    /// Add the L x H interaction term.
    #[arg(long)]
    pub interact: bool,
    /// Number of interactive factors.
    #[arg(long, default_value_t = 1)]
    pub r: usize,
    #[arg(long, default_value_t = 4)]
    pub q: usize,
    /// Bootstrap replications (0 = none).
    #[arg(long, default_value_t = 0)]
    pub boot: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Confidence levels in percent.
    #[arg(long, value_delimiter = ',', default_value = "68,90")]
    pub ci: Vec<f64>,
    #[arg(long, value_enum, default_value = "cross-sections")]
    pub resampling: ResamplingArg,
    /// Store every bootstrap replication in the JSON output.
    #[arg(long)]
    pub keep_draws: bool,
    #[arg(long, default_value = "panel.json")]
    pub output: String,
}

#[derive(Args, Debug, Serialize)]
pub struct TsRegArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Unit to regress; the weighted aggregate when absent.
    #[arg(long)]
    pub unit: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub q: usize,
    /// Include the high-frequency component.
    #[arg(long)]
    pub with_high: bool,
    /// Leads and lags of the differenced low-frequency regressor.
    #[arg(long, default_value_t = 0)]
    pub dols: usize,
    /// Newey-West bandwidth (default floor(0.75 T^(1/3))).
    #[arg(long)]
    pub bandwidth: Option<usize>,
    #[arg(long, default_value_t = 90.0)]
    pub level: f64,
    #[arg(long, default_value = "ts_reg.json")]
    pub output: String,
}

#[derive(Args, Debug, Serialize)]
pub struct DensityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 4)]
    pub q: usize,
    #[arg(long)]
    pub with_high: bool,
    #[arg(long, default_value = "density")]
    pub prefix: String,
}

#[derive(Args, Debug, Serialize)]
pub struct McFiltersArgs {
    /// JSON file with simulation settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sigma_l: Option<f64>,
    /// Temperature CSV containing CA, FL, IL, MA, ND, NY and WA; built-in
    /// parameters when absent.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long, default_value = "mc_filters")]
    pub prefix: String,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum DesignArg {
    Fe,
    Ife,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum ComponentsArg {
    Estimated,
    True,
}

#[derive(Args, Debug, Serialize)]
pub struct McPanelArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub design: Option<DesignArg>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Bootstrap replications per simulated panel (0 = none).
    #[arg(long)]
    pub boot: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub sigma_l: Option<f64>,
    #[arg(long, value_enum)]
    pub components: Option<ComponentsArg>,
    /// Calibrate to these data instead of the synthetic sample.
    #[arg(long, requires = "calibration_growth")]
    pub calibration_temperature: Option<PathBuf>,
    #[arg(long)]
    pub calibration_growth: Option<PathBuf>,
    #[arg(long, default_value = "mc_panel")]
    pub prefix: String,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1895)]
    pub seed: u64,
}

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or malformed input (exit 2).
    Validation(String),
    /// Estimation or I/O failure (exit 1).
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        use Error::*;
        match e {
            NoConvergence { .. }
            | OptimizerFailed(_)
            | BootstrapDegenerate(_)
            | SingularSystem
            | SingularCovariance
            | DegenerateRank
            | ExplosiveDynamics { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(format!("invalid JSON: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        lowfreq::par::init_global(cli.threads);
    }
    if let Err(e) = std::fs::create_dir_all(&cli.output_dir) {
        eprintln!("error: cannot create {}: {e}", cli.output_dir.display());
        return ExitCode::from(1);
    }
    let out = output::Out::new(cli.output_dir);
    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest(a, &out),
        Command::Decompose(a) => commands::decompose(a, &out),
        Command::UcFit(a) => commands::uc_fit(a, &out),
        Command::Factors(a) => commands::factors(a, &out),
        Command::Panel(a) => commands::panel(a, &out),
        Command::TsReg(a) => commands::ts_reg(a, &out),
        Command::Density(a) => commands::density(a, &out),
        Command::McFilters(a) => commands::mc_filters(a, &out),
        Command::McPanel(a) => commands::mc_panel(a, &out),
        Command::Synth(a) => commands::synth(a, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
