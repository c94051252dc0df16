use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "femnn", version, about = "FEM-residual trained neural surrogates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a forward surrogate on the assembled residual.
    TrainForward(TrainArgs),
    /// Evaluate a trained surrogate and report its residual.
    Predict(PredictArgs),
    /// Train the residual surrogate and a supervised baseline with matched budgets.
    CompareBaseline(CompareArgs),
    /// Monte-Carlo propagation through FEM or a surrogate.
    Uq(UqArgs),
    /// Identify speed-dependent bearing stiffness from frequency responses.
    Identify(IdentifyArgs),
    /// Write a synthetic rotor observation file.
    GenerateSyntheticObservations(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON config file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub family: Option<String>,
    /// Model JSON written by train-forward.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated input values in schema order.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub inputs: Option<Vec<f64>>,
    /// Refine with the classical solver when the relative residual exceeds --tol.
    #[arg(long)]
    pub refine: bool,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    /// Supervised dataset size.
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_heldout: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluatorKind {
    Fem,
    Surrogate,
    SurrogateFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Trained,
    Untrained,
}

#[derive(Debug, Clone, Args)]
pub struct UqArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, value_enum)]
    pub evaluator: Option<EvaluatorKind>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Relative residual tolerance of the fallback evaluator.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// `untrained` shifts the mean wind speed by the family's velocity factor.
    #[arg(long, value_enum)]
    pub region: Option<Region>,
}

#[derive(Debug, Clone, Args)]
pub struct IdentifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Observation file from generate-synthetic-observations or measurements.
    #[arg(long)]
    pub observations: Option<PathBuf>,
    /// Synthesize observations from the linear reference bearing instead.
    #[arg(long)]
    pub generate_synthetic: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub n_speeds: Option<usize>,
    /// Relative response noise of generated observations.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n_speeds: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}
