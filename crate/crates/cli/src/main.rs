mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

/// Exit statuses.
const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_INCOMPLETE: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "mixed-sustain",
    version,
    about = "Mixed-events disease progression and subtype inference"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a ground-truth model and a synthetic cohort.
    Simulate(SimulateArgs),
    /// Fit subtype models and stage every subject.
    Fit(FitArgs),
    /// Turn a raw measurement column into binary event densities.
    Gmm(GmmArgs),
    /// Choose the number of subtypes by cross-validated held-out likelihood.
    Crossval(CrossvalArgs),
    /// Score a model against a ground truth, or staging against labels.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON configuration with `biomarkers` and `simulate` sections.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; created if needed.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `simulate.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Cohort CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Largest number of subtypes to fit (overrides `fit.max_subtypes`).
    #[arg(long)]
    pub subtypes: Option<usize>,
    #[arg(long)]
    pub mcmc_iters: Option<usize>,
    #[arg(long)]
    pub startpoints: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace each z-score biomarker's milestones with ones derived from its
    /// data column before fitting.
    #[arg(long)]
    pub derive_z_values: bool,
}

#[derive(Debug, Args)]
pub struct GmmArgs {
    /// Input CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Raw-value column to model.
    #[arg(long)]
    pub column: String,
    /// Boolean column marking the reference (normal) group.
    #[arg(long)]
    pub reference_column: Option<String>,
    /// Biomarker name for the emitted columns; defaults to the column name.
    #[arg(long)]
    pub name: Option<String>,
    /// Output CSV: the input plus `<name>:pnotE` and `<name>:pE`.
    #[arg(long)]
    pub out: PathBuf,
    /// Fit parameters; defaults to the output path with `.gmm.json` appended.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV with one row per number of subtypes.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `fit.max_subtypes`.
    #[arg(long)]
    pub max_subtypes: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub mcmc_iters: Option<usize>,
    #[arg(long)]
    pub startpoints: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model JSON written by `fit` or `simulate`.
    #[arg(long)]
    pub model: PathBuf,
    /// Ground-truth model JSON to compare against.
    #[arg(long, conflicts_with_all = ["staging", "labels"])]
    pub truth: Option<PathBuf>,
    /// Staging CSV written by `fit`.
    #[arg(long, requires = "labels")]
    pub staging: Option<PathBuf>,
    /// CSV with `subject_id` and a boolean `converter` and/or numeric
    /// `cognition` column.
    #[arg(long, requires = "staging")]
    pub labels: Option<PathBuf>,
    /// Metrics CSV (`metric,subtype,value`).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a positional-variance heatmap.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// MCMC samples CSV for the heatmap; without it the model's point
    /// sequences are drawn.
    #[arg(long, requires = "svg")]
    pub samples: Option<PathBuf>,
}

/// Sizes the worker pool from `MIXED_SUSTAIN_THREADS` (0 or unset = auto).
fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("MIXED_SUSTAIN_THREADS") else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| {
        mixed_sustain::Error::InvalidArgument(format!("MIXED_SUSTAIN_THREADS must be a number, got `{value}`"))
    })?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<mixed_sustain::Error>() {
        Some(e) if e.is_validation() => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = configure_threads().and_then(|()| match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Gmm(a) => commands::gmm(&a),
        Command::Crossval(a) => commands::crossval(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
    });
    match result {
        Ok(commands::Outcome::Complete) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Incomplete) => ExitCode::from(EXIT_INCOMPLETE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
