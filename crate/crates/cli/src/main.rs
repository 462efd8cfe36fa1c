//! `coughnet` command-line interface.

mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Globals;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "coughnet", version, about = "Cough-audio COVID-19 screening: features, training, evaluation")]
struct Cli {
    /// Seed for every random choice in the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Feature cache directory; overrides `cache_dir` in the run config.
    #[arg(long, global = true, env = "COUGHNET_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    /// Audio kept around each active region, in ms.
    #[arg(long, global = true)]
    trim_margin_ms: Option<f64>,
    /// Silence detector window, in ms.
    #[arg(long, global = true)]
    trim_window_ms: Option<f64>,
    /// Silence threshold relative to the loudest window, in dB (≤ 0).
    #[arg(long, global = true, allow_negative_numbers = true)]
    trim_threshold_db: Option<f64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Preprocess audio and fill the feature cache for every configured feature set.
    Extract {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Overrides `manifest` in the run config.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Show class counts before and after SMOTE for the first feature set.
    BalancePreview {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Overrides `manifest` in the run config.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Nested cross-validation with grid search; writes fold reports, ROC curves and models.
    Train {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Overrides `manifest` in the run config.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an external cohort with the models of a `train` run.
    Evaluate {
        /// Output directory of `train`.
        #[arg(long)]
        run: PathBuf,
        /// Manifest of the external cohort.
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sequential forward search over feature dimensions.
    Sfs {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Overrides `manifest` in the run config.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render Specificity/Sensitivity/Accuracy/AUC tables from result CSVs or run directories.
    Report {
        /// Result CSVs or `train` output directories.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Also write report.csv and copy ROC/SFS curves here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the synthetic two-tone corpus and run the full pipeline on it.
    SynthDemo {
        /// Output directory.
        #[arg(long, default_value = "synth-demo")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = Globals {
        seed: cli.seed,
        workers: cli.workers,
        cache_dir: cli.cache_dir,
        trim_margin_ms: cli.trim_margin_ms,
        trim_window_ms: cli.trim_window_ms,
        trim_threshold_db: cli.trim_threshold_db,
    };
    match cli.command {
        Command::Extract { config, manifest } => commands::extract(&g, &config, manifest),
        Command::BalancePreview { config, manifest } => commands::balance_preview(&g, &config, manifest),
        Command::Train { config, manifest, out } => commands::train(&g, &config, manifest, &out),
        Command::Evaluate { run, manifest, out } => commands::evaluate(&g, &run, &manifest, &out),
        Command::Sfs { config, manifest, out } => commands::run_sfs(&g, &config, manifest, &out),
        Command::Report { inputs, out } => commands::report(&inputs, out.as_deref()),
        Command::SynthDemo { out } => commands::synth_demo(&g, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.record()).expect("error record serializes"));
            ExitCode::FAILURE
        }
    }
}
