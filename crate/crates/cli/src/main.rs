//! `hyposcreen` command-line entry point.

mod commands;
mod error;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hyposcreen", version, about = "Facial-expression screening pipeline for Parkinson's disease")]
struct Cli {
    /// Worker threads; defaults to HYPOSCREEN_THREADS, then the core count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn a recording manifest into a feature table.
    Featurize(FeaturizeArgs),
    /// Fit the full pipeline on every row and save the ensemble.
    Train(TrainArgs),
    /// Repeated stratified k-fold cross-validation of the full pipeline.
    Cv(CvArgs),
    /// Score a feature table with a saved ensemble.
    Predict(PredictArgs),
    /// Subgroup error rates and significance tests.
    Bias(BiasArgs),
    /// TreeSHAP attributions of the strongest base model.
    Explain(ExplainArgs),
    /// Two-component PCA projection and silhouette scores.
    Project(ProjectArgs),
    /// Generate a synthetic labelled cohort.
    Simulate(SimulateArgs),
    /// Deterministic hyperparameter sweep ranked by CV AUROC.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Landmark index map JSON, overriding the config.
    #[arg(long)]
    pub index_map: Option<PathBuf>,
    /// Drop frames whose tracking confidence is below this value.
    #[arg(long)]
    pub min_confidence: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the row audit log as JSON lines.
    #[arg(long)]
    pub audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seeds: Option<usize>,
    /// First seed; later runs use seed+1, seed+2, ...
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Pooled ROC of the first seed as CSV.
    #[arg(long)]
    pub roc_csv: Option<PathBuf>,
    #[arg(long)]
    pub roc_svg: Option<PathBuf>,
    #[arg(long)]
    pub audit: Option<PathBuf>,
    /// Also refit on all rows with the first seed and save the ensemble.
    #[arg(long)]
    pub refit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Demographic column: sex, ethnicity, cohort, age or disease_duration.
    #[arg(long)]
    pub group: String,
    /// Comma-separated bin edges for a continuous column.
    #[arg(long, value_delimiter = ',')]
    pub bins: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub summary_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Restricts the projection to the configured expressions.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Total number of participants.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 2.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 10)]
    pub dims: usize,
    /// Number of dimensions carrying the class shift.
    #[arg(long, default_value_t = 1)]
    pub informative: usize,
    #[arg(long, default_value_t = 0.5)]
    pub pos_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Demographic column of a planted subgroup effect.
    #[arg(long, requires_all = ["plant_group", "plant_scale"])]
    pub plant_column: Option<String>,
    #[arg(long)]
    pub plant_group: Option<String>,
    /// Multiplier on delta for positives in the planted subgroup.
    #[arg(long)]
    pub plant_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Feature table, overriding the grid file.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Named preset axis added to the grid (`expressions`).
    #[arg(long)]
    pub preset: Option<String>,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("HYPOSCREEN_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("HYPOSCREEN_THREADS must be a positive integer, got {v:?}"))),
        _ => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(CliError::Usage("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    match cli.command {
        Command::Featurize(a) => commands::featurize(a),
        Command::Train(a) => commands::train(a),
        Command::Cv(a) => commands::cv(a),
        Command::Predict(a) => commands::predict(a),
        Command::Bias(a) => commands::bias(a),
        Command::Explain(a) => commands::explain(a),
        Command::Project(a) => commands::project(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => sweep::sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return CliError::Usage(e.kind().to_string()).report();
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
