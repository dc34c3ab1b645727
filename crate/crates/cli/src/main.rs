mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "condext", version, about = "Conditional extremes for stationary time series")]
pub struct Cli {
    /// Worker threads for Monte Carlo and bootstrap loops.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Fit the semi-parametric marginal model, or scan thresholds.
    FitMarginal(FitMarginalArgs),
    /// Map a series to Laplace margins, or back with --inverse.
    Transform(TransformArgs),
    /// Fit a conditional model to threshold exceedances.
    Fit(FitArgs),
    /// Forward-simulate blocks from a fitted model.
    Simulate(SimulateArgs),
    /// Estimate a cluster functional.
    Estimate(EstimateArgs),
    /// Block-bootstrap a fit or an empirical estimate.
    Bootstrap(BootstrapArgs),
    /// Generate a synthetic series with standard Laplace margins.
    Generate(GenerateArgs),
    /// Residual diagnostics and threshold stability of a fitted model.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitMarginalArgs {
    /// Input CSV with columns segment_id,value.
    pub input: PathBuf,
    /// Threshold quantile for the GPD tail.
    #[arg(long, default_value_t = 0.95)]
    pub quantile: f64,
    /// Comma-separated quantiles for a stability scan instead of a fit.
    #[arg(long, value_delimiter = ',')]
    pub scan: Option<Vec<f64>>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TransformArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub marginal: PathBuf,
    /// Laplace scale back to the data scale.
    #[arg(long)]
    pub inverse: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureArg {
    Free,
    Geometric,
    Ar2,
    Ar3,
    Pt,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginArg {
    Dlaplace,
    Gaussian,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionArg {
    Forward,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterizationArg {
    ThresholdScaled,
    Unscaled,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitSettings {
    /// Threshold as a standard Laplace quantile.
    #[arg(long, default_value_t = 0.95)]
    pub u_quantile: f64,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub model: u8,
    #[arg(long, value_enum, default_value_t = StructureArg::Geometric)]
    pub structure: StructureArg,
    /// Recurrence order for the pt structure.
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, value_enum, default_value_t = MarginArg::Dlaplace)]
    pub working_margin: MarginArg,
    /// Two-stage parametric residual model.
    #[arg(long)]
    pub parametric: bool,
    #[arg(long, value_enum, default_value_t = ParameterizationArg::ThresholdScaled)]
    pub parameterization: ParameterizationArg,
    #[arg(long, value_enum, default_value_t = DirectionArg::Forward)]
    pub direction: DirectionArg,
    /// Independent backward and forward normings.
    #[arg(long)]
    pub asymmetric: bool,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// Data-scale CSV (with --marginal) or Laplace-scale CSV.
    pub input: PathBuf,
    #[arg(long)]
    pub marginal: Option<PathBuf>,
    #[command(flatten)]
    pub settings: FitSettings,
    /// Also write the residual store as CSV.
    #[arg(long)]
    pub residuals: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.99)]
    pub v_quantile: f64,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Back-transform the blocks with this marginal model.
    #[arg(long)]
    pub marginal: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalArg {
    Theta,
    Chi,
    E1,
    E2,
    E3,
    P,
    Pstar,
    MaxExceed,
    TotalExceed,
    ConsecExceed,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Forward,
    Aloe,
    Empirical,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleArg {
    Laplace,
    Data,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    /// Fitted model; required for forward and aloe.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Series for the empirical method (Laplace scale, or data scale with --marginal).
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[arg(long)]
    pub marginal: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub functional: FunctionalArg,
    #[arg(long, default_value_t = 0.99)]
    pub v_quantile: f64,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    /// Exceedance count for p and pstar.
    #[arg(long, default_value_t = 1)]
    pub r: usize,
    /// Count or run length for total_exceed and consec_exceed.
    #[arg(long, default_value_t = 1)]
    pub s: usize,
    /// Level for max_exceed, on the functional's scale.
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, value_enum, default_value_t = ScaleArg::Laplace)]
    pub scale: ScaleArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Forward)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bootstrap block length for the empirical standard error.
    #[arg(long, default_value_t = 20)]
    pub block_length: usize,
    #[arg(long, default_value_t = 200)]
    pub replications: usize,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeArg {
    Block,
    MovingBlock,
    Stationary,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BootstrapArgs {
    #[arg(long, default_value_t = 200)]
    pub replications: usize,
    #[arg(long, default_value_t = 20)]
    pub block_length: usize,
    #[arg(long, value_enum, default_value_t = SchemeArg::MovingBlock)]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replicate table; the summary goes to `<output>.summary.json`.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Inner command: `fit ...` or `estimate --method empirical ...`.
    #[arg(last = true, required = true)]
    pub inner: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorArg {
    GaussAr1,
    InvLogistic,
    GaussAr2,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: GeneratorArg,
    #[arg(long, default_value_t = 0.7)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.6)]
    pub theta1: f64,
    #[arg(long, default_value_t = 0.3)]
    pub theta2: f64,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiagnoseArgs {
    pub model: PathBuf,
    pub input: PathBuf,
    #[arg(long)]
    pub marginal: Option<PathBuf>,
    /// Threshold quantiles for a parameter stability table.
    #[arg(long, value_delimiter = ',')]
    pub u_grid: Option<Vec<f64>>,
    /// Output prefix: writes `<prefix>_tau.csv`, `<prefix>_qq.csv` and
    /// `<prefix>_stability.csv`.
    #[arg(short, long)]
    pub output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
