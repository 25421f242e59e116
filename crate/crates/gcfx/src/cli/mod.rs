//! Command-line experiment driver: configuration, manifest-backed
//! stage orchestration, and report output.

pub mod config;
pub mod manifest;
pub mod report;
pub mod stages;

pub use config::{ConfigError, DatasetSource, ExperimentConfig};
pub use manifest::{Manifest, ManifestError};
pub use stages::StageError;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser)]
#[command(name = "gcfx", about = "Model-level counterfactual explanations for graph classifiers", disable_help_subcommand = true)]
struct Cli {
    /// Experiment configuration file; defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or import) the dataset and write its stats table.
    GenerateDataset,
    /// Train the k-fold consensus classifier.
    TrainClassifier,
    /// Train the counterfactual generator.
    TrainVqcfx,
    /// Build the approximate counterfactual candidate pool.
    GenerateCandidates,
    /// Select the global summary from the pool.
    Summarize,
    /// Compute validity, coverage, and cost of the summary.
    Evaluate,
    /// Write per-pair figures and the selection table.
    Report,
    /// Print the default configuration.
    Defaults,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // clap renders --help/--version through the error path too
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        },
        None => ExperimentConfig::default(),
    };
    let result = match cli.command {
        Command::Defaults => {
            print!("{}", ExperimentConfig::default().render());
            return EXIT_OK;
        }
        Command::GenerateDataset => stages::cmd_generate_dataset(&cfg),
        Command::TrainClassifier => stages::cmd_train_classifier(&cfg),
        Command::TrainVqcfx => stages::cmd_train_vqcfx(&cfg),
        Command::GenerateCandidates => stages::cmd_generate_candidates(&cfg),
        Command::Summarize => stages::cmd_summarize(&cfg),
        Command::Evaluate => stages::cmd_evaluate(&cfg),
        Command::Report => stages::cmd_report(&cfg),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
