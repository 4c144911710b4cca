//! Command-line driver: config resolution, subcommands and exit codes.

mod commands;
mod resolve;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use uda_core::{Error, ErrorCategory};

pub use commands::run;
pub use resolve::{resolve_config, resolve_str, snapshot, Override};

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_DATA: u8 = 4;
pub const EXIT_NUMERIC: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "uda", version, about = "Classifier-adversarial domain adaptation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Config file plus overrides, shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML config file; omitted means all defaults
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set losses.beta=0.05`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<Override>,
    /// Directory for output files, created if missing
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model; writes metrics.jsonl, checkpoint.json and config.toml
    Train(ConfigArgs),
    /// Score a checkpoint on both domains; writes evaluation.json
    Evaluate {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train every ablation variant; writes ablation.csv
    Ablate(ConfigArgs),
    /// Finite-difference check of every primitive and of the configured model
    Gradcheck {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
    /// Write the configured dataset to data.csv
    GenData(ConfigArgs),
    /// Write extractor features of both domains to embeddings.csv
    ExportEmbeddings {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Ablate(_) => "ablate",
            Command::Gradcheck { .. } => "gradcheck",
            Command::GenData(_) => "gen-data",
            Command::ExportEmbeddings { .. } => "export-embeddings",
        }
    }
}

/// Process exit code for a failed run.
pub fn exit_code(err: &Error) -> u8 {
    match err.category() {
        ErrorCategory::Config => EXIT_CONFIG,
        ErrorCategory::Data => EXIT_DATA,
        ErrorCategory::Numeric => EXIT_NUMERIC,
    }
}
