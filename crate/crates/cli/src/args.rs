use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "flexbal", version, about = "Flexible covariate balancing with confidence certificates")]
pub struct Cli {
    /// Output directory. Defaults to $FLEXBAL_OUT, then the current directory.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,

    /// Worker threads for replications (default: logical cores).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,

    /// Record wall-clock timings in the manifest. Timed manifests differ between runs.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub timings: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Balance one dataset or simulation and report estimates with certificates.
    Balance(BalanceArgs),
    /// Replicate a simulation design for the flexible method and every baseline on a λ grid.
    Replicate(ReplicateArgs),
    /// Empirical coverage of the certificate on the well-specified linear design.
    Coverage(CoverageArgs),
    /// Write a simulated dataset as CSV together with its ground truth.
    Simulate(SimulateArgs),
    /// Standardise and optionally expand a CSV dataset into random Fourier features.
    Prepare(PrepareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimName {
    Subgroup,
    Celebrity,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ebal,
    Sbw,
    Ncbps,
    Fbal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceName {
    Kl,
    Chi2,
    Cbps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupName {
    Treated,
    Control,
    Ate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringName {
    Raw,
    Centred,
}

#[derive(Debug, Args, Serialize)]
pub struct SimArgs {
    /// Total sample size over both groups.
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    /// Number of covariates, not counting the constant.
    #[arg(long, default_value_t = 120)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// ℓ1 norm of the true coefficients (linear design).
    #[arg(long, default_value_t = 3.0)]
    pub k_true: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Outcome column.
    #[arg(long, default_value = "y")]
    pub outcome: String,
    /// Treatment column (values 0 or 1).
    #[arg(long, default_value = "t")]
    pub treatment: String,
    /// Comma-separated covariate columns (default: all others).
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Keep covariates on their original scale.
    #[arg(long)]
    pub no_standardize: bool,
    /// Drop covariates whose share of zeros exceeds this threshold.
    #[arg(long)]
    pub drop_sparse: Option<f64>,
    /// Replace covariates by this many random Fourier features.
    #[arg(long)]
    pub rff: Option<usize>,
    /// Fixed RFF bandwidth (default: median heuristic).
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Seed for RFF sampling and bandwidth subsampling.
    #[arg(long, default_value_t = 0)]
    pub rff_seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct BalanceArgs {
    /// CSV dataset.
    #[arg(long, conflicts_with = "sim", required_unless_present = "sim")]
    pub data: Option<PathBuf>,
    /// Simulation design instead of a dataset.
    #[arg(long, value_enum)]
    pub sim: Option<SimName>,
    #[command(flatten)]
    pub sim_args: SimArgs,
    #[command(flatten)]
    pub data_args: DataArgs,
    /// JSON file {"mean": [...], "n": N} with an external target mean on the original covariate scale.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Fbal)]
    pub method: Method,
    /// Divergence of the flexible method (baselines fix their own).
    #[arg(long, value_enum, default_value_t = DivergenceName::Kl)]
    pub divergence: DivergenceName,
    /// Penalty of a baseline in penalised form. The default 1.0 carries over the
    /// constant-1 default of entropy balancing's constraint parameter; the two
    /// parameterisations are not equivalent.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Hold λ fixed in the flexible program.
    #[arg(long)]
    pub fixed_lambda: Option<f64>,
    /// Hold δ fixed in the flexible program.
    #[arg(long)]
    pub fixed_delta: Option<f64>,
    /// Outcome-model ℓ1 bound (default: lasso residual bend per group).
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = GroupName::Ate)]
    pub group: GroupName,
    /// Two one-sided solves instead of a symmetric interval (single group, flexible method).
    #[arg(long)]
    pub asymmetric: bool,
    /// Fail when the outcome-bound program is infeasible instead of relaxing it.
    #[arg(long)]
    pub strict_lp: bool,
    #[arg(long, value_enum, default_value_t = CenteringName::Raw)]
    pub centering: CenteringName,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplicateArgs {
    #[arg(long, value_enum)]
    pub sim: SimName,
    #[command(flatten)]
    pub sim_args: SimArgs,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    /// Comma-separated λ grid for the baselines.
    #[arg(long, value_delimiter = ',', default_value = "1e-4,1e-3,1e-2,1e-1,1,10,100")]
    pub lambda_grid: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub strict_lp: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct CoverageArgs {
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    #[arg(long, default_value_t = 3.0)]
    pub k_true: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = DivergenceName::Kl)]
    pub divergence: DivergenceName,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub sim: SimName,
    #[command(flatten)]
    pub sim_args: SimArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct PrepareArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub data_args: DataArgs,
}
