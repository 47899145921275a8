//! Command-line flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

/// Default seed when neither `--seed` nor `ITQ_SEED` is given.
pub const DEFAULT_SEED: u64 = 20_211_104;

#[derive(Debug, Clone, Parser, Serialize, Deserialize)]
#[command(name = "itq", version, about = "Randomization inference for quantiles of individual treatment effects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Seed for every Monte Carlo step.
    #[arg(long, global = true, env = "ITQ_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Monte Carlo draws for null distributions and corrections.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub mc_draws: usize,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Directory for result.json, result.csv and manifest.json.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
pub enum Command {
    /// Confidence intervals for effect quantiles.
    QuantileCi(QuantileCiArgs),
    /// P-value for a quantile null hypothesis.
    Test(TestArgs),
    /// Treated quantile intervals across sensitivity bounds for matched sets.
    Sensitivity(SensitivityArgs),
    /// Intervals for population effect quantiles.
    PopulationCi(PopulationArgs),
    /// Simulation studies and coverage audits.
    Simulate(SimulateArgs),
    /// Re-runs a recorded command and checks its outputs match.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Statistic {
    Wilcoxon,
    Stephenson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum NullChoice {
    Auto,
    Exact,
    Mc,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// CSV with columns z, y and optional stratum, unit_id.
    #[arg(long)]
    pub data: PathBuf,

    /// Shuffle rows with this seed before analysis.
    #[arg(long)]
    pub shuffle_seed: Option<u64>,

    #[arg(long, value_enum, default_value_t = Statistic::Stephenson)]
    pub statistic: Statistic,

    /// Stephenson order.
    #[arg(long, default_value_t = 6)]
    pub s: u32,

    /// How null distributions are computed.
    #[arg(long, value_enum, default_value_t = NullChoice::Auto)]
    pub null: NullChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Method {
    /// Original all-units inversion.
    M0,
    /// Pooled treated and control intervals for all quantiles.
    M1,
    /// Corrected simultaneous intervals for selected quantiles.
    M2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Sides {
    Treated,
    Both,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct QuantileCiArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,

    #[arg(long, value_enum, default_value_t = Method::M1)]
    pub method: Method,

    /// Share of alpha spent on the index correction (m2).
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,

    /// Quantile levels in (0, 1], comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "all")]
    pub quantiles: Option<Vec<f64>>,

    /// All n quantiles.
    #[arg(long)]
    pub all: bool,

    /// Which labelings m2 combines.
    #[arg(long, value_enum, default_value_t = Sides::Both)]
    pub sides: Sides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum TestScope {
    All,
    Treated,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Quantile index, or `n` for the largest.
    #[arg(long)]
    pub k: String,

    #[arg(long)]
    pub c: f64,

    #[arg(long, value_enum, default_value_t = TestScope::All)]
    pub scope: TestScope,

    /// Use the corrected test with this treated index.
    #[arg(long)]
    pub k_prime: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum SensitivityModeArg {
    Pairs,
    Gaussian,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,

    /// Sensitivity bounds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    pub gamma_grid: Vec<f64>,

    #[arg(long, value_enum, default_value_t = SensitivityModeArg::Pairs)]
    pub mode: SensitivityModeArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum PopulationScope {
    All,
    Treated,
    Control,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PopulationArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,

    /// Quantile levels in (0, 1], comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub betas: Vec<f64>,

    /// Finite population size; omit for a superpopulation.
    #[arg(long)]
    pub population: Option<u64>,

    /// Share of alpha spent on the sampling step.
    #[arg(long, default_value_t = 0.5)]
    pub split_gamma: f64,

    #[arg(long, value_enum, default_value_t = PopulationScope::All)]
    pub scope: PopulationScope,

    /// Emit the step-function band instead of the pointwise family.
    #[arg(long)]
    pub band: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Study {
    MethodComparison,
    #[value(name = "gamma-study")]
    Gamma,
    Coverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum AuditProcedure {
    Pooled,
    Single,
    Simultaneous,
    Finite,
    Super,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub study: Study,

    #[arg(long, default_value_t = 500)]
    pub replications: usize,

    #[arg(long, default_value_t = 100)]
    pub n: usize,

    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,

    #[arg(long, default_value_t = 6)]
    pub s: u32,

    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub rho2: Vec<f64>,

    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub gammas: Vec<f64>,

    /// Quantile levels studied or audited.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.9")]
    pub quantiles: Vec<f64>,

    /// Coverage procedure.
    #[arg(long, value_enum, default_value_t = AuditProcedure::Simultaneous)]
    pub procedure: AuditProcedure,

    /// Budget split for corrected procedures.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,

    /// Finite population size for coverage audits.
    #[arg(long)]
    pub population: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// manifest.json written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
}
