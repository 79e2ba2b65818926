//! `sdforest` command-line tool.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Spectrally deconfounded regression trees and random forests.
#[derive(Debug, Parser)]
#[command(name = "sdforest", version = sdforest::io::VERSION, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Worker threads; all available cores when omitted.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every random draw; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving all outputs.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// JSON file overriding the built-in preset. Flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a forest to a CSV file.
    Fit(FitArgs),
    /// Predict with a fitted model.
    Predict(PredictArgs),
    /// Importance and stability along a cp grid.
    Paths(PathsArgs),
    /// Partial dependence curves.
    Pdp(PdpArgs),
    /// Test error as one simulation dimension varies.
    BenchDims(BenchDimsArgs),
    /// Prediction change under added dense confounding.
    BenchPerturb(BenchPerturbArgs),
    /// Rank of the true parents by importance.
    BenchScreening(BenchScreeningArgs),
    /// Size of the confounding remainder along an (n, p) grid.
    RateCheck(RateCheckArgs),
    /// Single trees with both cache variants.
    VariantStudy(VariantStudyArgs),
    /// Singular values before and after the transforms.
    Spectrum(SpectrumArgs),
    /// Write a synthetic data set.
    Simulate(SimulateArgs),
}

/// Forest hyperparameters shared by several commands.
#[derive(Debug, Clone, Default, Args)]
pub struct ForestArgs {
    #[arg(long)]
    pub n_trees: Option<usize>,
    /// Covariates tried per split; floor(p / 2) by default.
    #[arg(long)]
    pub mtry: Option<usize>,
    /// Complexity parameter: minimal relative loss decrease of a split.
    #[arg(long)]
    pub cp: Option<f64>,
    /// trim, pca or identity. identity gives a classical forest.
    #[arg(long)]
    pub transform: Option<String>,
    /// Leading directions removed by the pca transform.
    #[arg(long)]
    pub pca_remove: Option<usize>,
    /// Standardize columns before the decomposition.
    #[arg(long)]
    pub scale_columns: Option<bool>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub max_candidates: Option<usize>,
    /// SDT1 or SDT2.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub max_splits: Option<usize>,
    /// Bootstrap sample size; n by default.
    #[arg(long)]
    pub sample_size: Option<usize>,
    /// Reuse the full-data transform for every tree.
    #[arg(long)]
    pub share_q: Option<bool>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training CSV with a header row.
    pub data: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    pub response: String,
    /// Columns to drop, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ignore: Vec<String>,
    #[command(flatten)]
    pub forest: ForestArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    /// Columns to drop before predicting, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ignore: Vec<String>,
    #[arg(long, default_value = "predictions.csv")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct PathsArgs {
    pub model: PathBuf,
    /// Ascending cp values, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub cp_grid: Vec<f64>,
    /// Size of the default log-spaced grid from 1e-4 to 1.
    #[arg(long, default_value_t = 30)]
    pub grid_points: usize,
}

#[derive(Debug, Args)]
pub struct PdpArgs {
    pub model: PathBuf,
    /// Reference data for averaging.
    pub data: PathBuf,
    /// Zero-based covariate indices, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub covariates: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub grid_points: usize,
    /// Number of randomly chosen observations with their own curve.
    #[arg(long, default_value_t = 0)]
    pub individual: usize,
    #[arg(long, value_delimiter = ',')]
    pub ignore: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DimsPreset {
    /// n = p = 300, 50 trees, 20 replicates.
    Desk,
    /// n = p = 500, 100 trees.
    Full,
}

#[derive(Debug, Args)]
pub struct BenchDimsArgs {
    /// n, p, q or density.
    #[arg(long)]
    pub vary: String,
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_enum, default_value_t = DimsPreset::Desk)]
    pub preset: DimsPreset,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[command(flatten)]
    pub forest: ForestArgs,
}

#[derive(Debug, Args)]
pub struct BenchPerturbArgs {
    /// Base data; synthetic unconfounded data when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Response column of the base data.
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub ignore: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub tau_grid: Vec<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[command(flatten)]
    pub forest: ForestArgs,
}

#[derive(Debug, Args)]
pub struct BenchScreeningArgs {
    #[arg(long)]
    pub reps: Option<usize>,
    #[command(flatten)]
    pub forest: ForestArgs,
}

#[derive(Debug, Args)]
pub struct RateCheckArgs {
    /// (n, p) pairs written as NxP, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VariantStudyArgs {
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub cp: Option<f64>,
    #[arg(long)]
    pub n_test: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    /// Linear latent confounding.
    Linear,
    /// Nonlinear confounding with a spiked spectrum.
    Nonlinear,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Design matrix; synthetic data when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Columns to drop, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ignore: Vec<String>,
    #[arg(long, value_enum, default_value_t = Generator::Linear)]
    pub generator: Generator,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    /// Directions removed by the pca transform; q for linear synthetic
    /// data and 1 otherwise.
    #[arg(long)]
    pub q_remove: Option<usize>,
    #[arg(long)]
    pub scale_columns: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub density: Option<f64>,
    /// fourier, random_tree or none.
    #[arg(long)]
    pub f0: Option<String>,
    #[arg(long)]
    pub sigma_nu: Option<f64>,
    #[arg(long, default_value = "dataset.csv")]
    pub output: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
