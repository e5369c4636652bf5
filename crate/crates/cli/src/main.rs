//! flowkd command-line front end.
//!
//! Exit codes: 0 success, 2 config/data validation, 3 training divergence,
//! 4 I/O or checkpoint failure, 1 anything else.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flowkd::error::FlowError;

#[derive(Parser)]
#[command(name = "flowkd", version, about = "Normalizing-flow density estimation with knowledge distillation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from an experiment config (distills when the config
    /// says so).
    Train {
        config: PathBuf,
        /// Install a λ preset (lkd, ilkd, or skd), overriding the config.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Train a student against a teacher checkpoint; requires a
    /// distillation mode.
    Distill {
        config: PathBuf,
        #[arg(long)]
        preset: Option<String>,
    },
    /// Report held-out metrics of a checkpoint on the config's data.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Draw samples from a checkpoint into a CSV file.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Norm-preserving interpolation between two events (single-row CSVs).
    Interpolate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "from")]
        from: PathBuf,
        #[arg(long = "to")]
        to: PathBuf,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the forward log-density pass and report the parameter count.
    Benchmark {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 512)]
        batch: usize,
        #[arg(long, default_value_t = 30)]
        repeats: usize,
    },
}

fn exit_code_for(err: &FlowError) -> u8 {
    match err {
        FlowError::Config(_)
        | FlowError::Parse { .. }
        | FlowError::Data(_)
        | FlowError::DegenerateData(_)
        | FlowError::Shape(_) => 2,
        FlowError::Divergence { .. } => 3,
        FlowError::Io(_) | FlowError::Checkpoint(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { config, preset } => {
            commands::cmd_train(config, preset.as_deref(), false)
        }
        Command::Distill { config, preset } => {
            commands::cmd_train(config, preset.as_deref(), true)
        }
        Command::Evaluate { checkpoint, config } => commands::cmd_evaluate(checkpoint, config),
        Command::Sample {
            checkpoint,
            count,
            temperature,
            seed,
            out,
        } => commands::cmd_sample(checkpoint, *count, *temperature, *seed, out),
        Command::Interpolate {
            checkpoint,
            from,
            to,
            steps,
            out,
        } => commands::cmd_interpolate(checkpoint, from, to, *steps, out),
        Command::Benchmark {
            checkpoint,
            batch,
            repeats,
        } => commands::cmd_benchmark(checkpoint, *batch, *repeats),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err);
            ExitCode::from(exit_code_for(&err))
        }
    }
}
