//! Command-line driver.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure (training diverged).

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "unikd",
    version,
    about = "Cross-domain model compression for time series classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic domain-shift dataset directory
    GenData {
        /// JSON file describing the generator (classes, dims, shift, seed)
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the spec's seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Pretrain the teacher with domain-adversarial training
    TrainTeacher {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distill a student from a pretrained teacher (or train a baseline)
    Distill {
        #[arg(long)]
        data: PathBuf,
        /// Teacher checkpoint; required for every variant except source_only
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// One of: source_only, dd_only, dd_df, dd_jkd, dd_df_skd, full
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all six variants across seeds and tabulate target macro-F1
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the source cross-entropy weight on the full variant
    SweepBeta {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export model features as CSV for external embedding/visualization
    DumpFeatures {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// source, target, or all
        #[arg(long, default_value = "all")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> unikd_core::Result<()> {
    match cli.command {
        Command::GenData { spec, out, seed } => commands::cmd_gen_data(&spec, &out, seed),
        Command::TrainTeacher { data, config, out } => {
            commands::cmd_train_teacher(&data, config.as_deref(), &out)
        }
        Command::Distill {
            data,
            teacher,
            config,
            variant,
            seed,
            out,
        } => commands::cmd_distill(
            &data,
            teacher.as_deref(),
            config.as_deref(),
            variant.as_deref(),
            seed,
            &out,
        ),
        Command::Ablate {
            data,
            teacher,
            config,
            seeds,
            out,
        } => commands::cmd_ablate(&data, &teacher, config.as_deref(), &seeds, &out),
        Command::SweepBeta {
            data,
            teacher,
            config,
            values,
            seeds,
            out,
        } => commands::cmd_sweep_beta(&data, &teacher, config.as_deref(), &values, &seeds, &out),
        Command::DumpFeatures {
            data,
            checkpoint,
            split,
            out,
        } => commands::cmd_dump_features(&data, &checkpoint, &split, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
