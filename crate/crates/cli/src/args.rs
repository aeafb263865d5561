use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(
    name = "probit-uq",
    version,
    about = "Uncertainty quantification experiments for probit classification"
)]
pub struct Cli {
    /// Directory receiving every output file and the manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Encoding of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,

    /// Worker threads for independent trials (0 = all available cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Sample a dataset from the probit teacher-student model.
    Generate(GenerateArgs),
    /// Run GAMP (Bayes-optimal or ERM channel) on a dataset.
    Gamp(GampArgs),
    /// Minimize the regularized logistic risk on a dataset.
    Erm(ErmArgs),
    /// Solve the state-evolution fixed point.
    Se(SeArgs),
    /// Evaluate a two-dimensional confidence density on a grid.
    Density(DensityArgs),
    /// Evaluate the ERM calibration curve.
    Calibration(CalibrationArgs),
    /// Locate λ_error and λ_loss, asymptotically or on a dataset.
    Crossval(CrossvalArgs),
    /// Reproduce one of the figure recipes (theory and simulation).
    Figure(FigureArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Gamp(_) => "gamp",
            Command::Erm(_) => "erm",
            Command::Se(_) => "se",
            Command::Density(_) => "density",
            Command::Calibration(_) => "calibration",
            Command::Crossval(_) => "crossval",
            Command::Figure(_) => "figure",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "dataset.csv")]
    pub output: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    Bayes,
    Erm,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GampArgs {
    /// Dataset CSV written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Channel::Bayes)]
    pub channel: Channel,
    /// Ridge strength for the ERM channel (prior precision 1 is used for Bayes).
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0.2)]
    pub damping: f64,
    /// Seed of the random initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fresh test points used for the reported test error.
    #[arg(long, default_value_t = 100_000)]
    pub n_test: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ErmArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 100_000)]
    pub n_test: usize,
    /// Seed of the test points.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SeOptions {
    /// Gauss-Hermite nodes (odd).
    #[arg(long, default_value_t = 199)]
    pub nodes: usize,
    /// Relative fixed-point tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SeArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub tau: f64,
    /// Ridge strength of the ERM estimator; omit for the Bayes fixed point only.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub se: SeOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pair {
    /// Teacher (a) against ERM (b).
    StarErm,
    /// Bayes (a) against ERM (b).
    BoErm,
    /// Teacher (a) against Bayes (b).
    StarBo,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DensityArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = Pair::StarBo)]
    pub pair: Pair,
    /// Cells per axis.
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[command(flatten)]
    pub se: SeOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    Teacher,
    Bayes,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// Interior points of the p grid, k/(points+1).
    #[arg(long, default_value_t = 99)]
    pub points: usize,
    #[arg(long, value_enum, default_value_t = Reference::Teacher)]
    pub reference: Reference,
    #[command(flatten)]
    pub se: SeOptions,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub tau: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub grid_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub grid_max: f64,
    #[arg(long, default_value_t = 40)]
    pub grid_points: usize,
    /// Confidence levels at which Δ_p is reported.
    #[arg(long, value_delimiter = ',', default_value = "0.6,0.75,0.9")]
    pub p_levels: Vec<f64>,
    /// Use a holdout split of a dataset instead of the asymptotic theory.
    #[arg(long)]
    pub empirical: bool,
    /// Dataset for the empirical mode; generated from --d and --seed if absent.
    #[arg(long, requires = "empirical")]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[command(flatten)]
    pub se: SeOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureId {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct FigureArgs {
    #[arg(value_enum)]
    pub id: FigureId,
    /// Dimension of the simulated instances (recipe default if absent).
    #[arg(long)]
    pub d: Option<usize>,
    /// Test points per simulated panel (recipe default if absent).
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Independent replicates for the calibration recipes (recipe default if absent).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Cells per axis of density grids and histograms.
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
    /// Skip the simulations and write the theory files only.
    #[arg(long)]
    pub theory_only: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
}
