use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netfilter_core::estimate::{EstimatorSettings, SolverSettings};
use netfilter_core::evaluate::Preset;

#[derive(Debug, Parser)]
#[command(name = "netfilter", version, about = "Network filtering for multi-attribute perturbation-site detection")]
pub struct Cli {
    /// Worker threads for parallel steps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Record wall-clock runtime in reports. Outputs are then no longer reproducible byte for byte.
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a seeded simulation study and write ranking metrics.
    Simulate(SimulateArgs),
    /// Draw synthetic control and case data from a block-model network.
    Generate(GenerateArgs),
    /// Estimate the block-sparse precision matrix from control samples.
    Estimate(EstimateArgs),
    /// Filter case samples and rank nodes by their likelihood ratio statistic.
    Rank(RankArgs),
    /// Sequentially detect several perturbation sites.
    Sequential(SequentialArgs),
    /// Rank nodes by cross-validated prediction error.
    Cv(CvArgs),
    /// Sensitivity of node statistics to an inexact precision matrix.
    Accuracy(AccuracyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Table1,
    Table3,
    Table5,
    Supp,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Table1 => Preset::Table1,
            PresetArg::Table3 => Preset::Table3,
            PresetArg::Table5 => Preset::Table5,
            PresetArg::Supp => Preset::Supp,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    /// EBIC sparsity parameter.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// Number of penalty values on the path.
    #[arg(long, default_value_t = 30)]
    pub lambdas: usize,
    /// Smallest penalty as a fraction of the largest.
    #[arg(long, default_value_t = 0.01)]
    pub lambda_min_ratio: f64,
    /// Relative objective change at which the solver stops.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
}

impl EstimatorArgs {
    pub fn settings(&self) -> EstimatorSettings {
        let d = EstimatorSettings::default();
        EstimatorSettings {
            solver: SolverSettings { tol: self.tol, max_iter: self.max_iter, ..d.solver },
            n_lambda: self.lambdas,
            lambda_min_ratio: self.lambda_min_ratio,
            gamma: self.gamma,
            ..d
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LayoutArgs {
    /// Attributes per node.
    #[arg(long)]
    pub k: usize,
    /// Number of nodes (checked against the column count when given).
    #[arg(long)]
    pub p: Option<usize>,
    /// Node names, one per line.
    #[arg(long)]
    pub names: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub preset: PresetArg,
    /// Comma-separated methods (default: the preset's).
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Comma-separated block sizes.
    #[arg(long, value_delimiter = ',')]
    pub blocks: Vec<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Samples per condition.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub rho_in: Option<f64>,
    #[arg(long)]
    pub rho_out: Option<f64>,
    #[arg(long)]
    pub snr: Option<f64>,
    /// SNR of the second site in two-site studies.
    #[arg(long)]
    pub second_snr: Option<f64>,
    #[arg(long)]
    pub theta_within: Option<f64>,
    #[arg(long)]
    pub theta_across: Option<f64>,
    #[arg(long)]
    pub networks: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Filter with the true precision matrix instead of the estimate.
    #[arg(long)]
    pub true_precision: bool,
    /// Attribute used by single-attribute methods.
    #[arg(long)]
    pub single_attribute: Option<usize>,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 20)]
    pub p: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Comma-separated block sizes (default: two halves).
    #[arg(long, value_delimiter = ',')]
    pub blocks: Vec<usize>,
    #[arg(long, default_value_t = 0.4)]
    pub theta_within: f64,
    #[arg(long, default_value_t = 0.2)]
    pub theta_across: f64,
    #[arg(long, default_value_t = 0.8)]
    pub rho_in: f64,
    #[arg(long, default_value_t = 0.2)]
    pub rho_out: f64,
    /// Control samples.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// Case samples (default: same as --n).
    #[arg(long)]
    pub n_case: Option<usize>,
    /// Comma-separated perturbed nodes (0-based).
    #[arg(long, value_delimiter = ',')]
    pub perturb: Vec<usize>,
    /// One SNR for all perturbed nodes, or one per node.
    #[arg(long, value_delimiter = ',', default_value = "0.2")]
    pub snr: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Control samples (CSV, n × pK).
    #[arg(long)]
    pub control: PathBuf,
    #[command(flatten)]
    pub layout: LayoutArgs,
    /// Penalty weights (CSV, p × p, strictly positive).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RankArgs {
    /// Case samples (CSV, n × pK).
    #[arg(long)]
    pub case: PathBuf,
    /// Precision matrix (CSV, pK × pK), e.g. omega_hat.csv from `estimate`.
    #[arg(long)]
    pub omega: PathBuf,
    #[command(flatten)]
    pub layout: LayoutArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SequentialArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long)]
    pub omega: PathBuf,
    #[command(flatten)]
    pub layout: LayoutArgs,
    #[arg(long, default_value_t = 5)]
    pub max_steps: usize,
    /// Stop at the first step without an adjusted p-value below this level.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Adjust p-values over all steps instead of within each step.
    #[arg(long)]
    pub pooled: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long)]
    pub control: PathBuf,
    #[command(flatten)]
    pub layout: LayoutArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AccuracyArgs {
    /// True precision matrix (CSV, pK × pK).
    #[arg(long)]
    pub omega: PathBuf,
    /// Working precision matrix (CSV, pK × pK).
    #[arg(long)]
    pub omega_tilde: PathBuf,
    #[command(flatten)]
    pub layout: LayoutArgs,
    /// Comma-separated nodes to analyse (default: all).
    #[arg(long, value_delimiter = ',')]
    pub node: Vec<usize>,
    /// Case sample size.
    #[arg(long)]
    pub n: usize,
    /// Mean shift (CSV, one row of pK values).
    #[arg(long)]
    pub mu: Option<PathBuf>,
    /// Monte Carlo replicates for an empirical check (0 skips it).
    #[arg(long, default_value_t = 0)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
