//! CLI wiring: configuration loading with dotted overrides, the subcommand
//! implementations, and the exit-code contract (0 success, 1 domain
//! failure, 2 usage/environment error).

mod commands;
mod config;

pub use commands::execute;
pub use config::{apply_override, load_config};

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or environment: exit 2.
    Usage(String),
    /// The pipeline ran and found the data or run unacceptable: exit 1.
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Domain(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(
    name = "pme",
    version,
    about = "Benchmark pipeline for predicting perceived message effectiveness"
)]
pub struct Cli {
    /// Path to the run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Dotted-path config override, e.g. --override bootstrap.seed=7
    /// (repeatable; applied after the file is parsed).
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Suppress informational output.
    #[arg(long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,

    /// Print extra progress detail.
    #[arg(long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the dataset and report structural checks (exit 0 iff clean).
    Validate,
    /// Build and persist the within-participant split manifest.
    Split,
    /// Run the full strategy x backend matrix and export all artifacts.
    Run,
    /// Accuracy-versus-history-size sweep for the digital-twin strategies.
    Sweep,
    /// Top-K message selection evaluation from stored predictions.
    Topk,
    /// Regenerate metric tables and distributions from stored predictions.
    Report,
    /// Generate a synthetic cohort with the study's shape.
    Gen {
        #[arg(long, default_value_t = 301)]
        participants: usize,
        #[arg(long, default_value_t = 124)]
        messages: usize,
        #[arg(long, default_value_t = 10)]
        ratings_per_participant: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Directory for participants.csv, messages.csv, ratings.csv.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

/// Stdout chatter control shared by the commands.
#[derive(Debug, Clone, Copy)]
pub struct Printer {
    pub quiet: bool,
    pub verbose: bool,
}

impl Printer {
    pub fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    pub fn detail(&self, msg: impl AsRef<str>) {
        if self.verbose {
            println!("{}", msg.as_ref());
        }
    }
}
