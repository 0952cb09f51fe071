//! `mgt`: train, evaluate and inspect multi-hop graph transformer models.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 training
//! diverged, 3 a check (gradient check) failed.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mgtnet::TrainError;

#[derive(Parser, Debug)]
#[command(name = "mgt", version, about = "Multi-hop graph transformer for 2D-to-3D pose lifting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model; writes model.mgtc, history.csv and config.toml to --out.
    Train {
        /// TOML file of preset overrides; unknown keys are rejected.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Pose dataset (.mgtp).
        #[arg(long)]
        data: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the preset and config file.
        #[arg(long)]
        seed: Option<u64>,
        /// toy, paper-default or gt-ablation (default toy).
        #[arg(long)]
        preset: Option<String>,
        /// Stream the per-epoch history to stdout as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Per-action and aggregate metrics of a checkpoint on a dataset.
    Eval {
        /// Checkpoint written by `mgt train` (model.mgtc).
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        csv: bool,
        /// Write predicted and ground-truth coordinates as CSV.
        #[arg(long, value_name = "FILE")]
        dump_poses: Option<PathBuf>,
    },
    /// Hop distances, k-adjacency sparsity and spectra of a skeleton.
    Graph {
        /// Skeleton TOML file or built-in name.
        #[arg(default_value = "human36m")]
        skeleton: String,
        #[arg(long, default_value_t = 4)]
        k_max: usize,
        #[arg(long)]
        csv: bool,
    },
    /// Finite-difference check of every parameter gradient of a small model.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, value_enum, default_value_t = commands::GradcheckObjective::Output)]
        objective: commands::GradcheckObjective,
        /// Central-difference step.
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        csv: bool,
        /// Largest number of scalar parameters that will be checked.
        #[arg(long, default_value_t = 50_000)]
        max_params: usize,
        #[arg(long, hide = true)]
        corrupt_backward: bool,
    },
    /// Train one fresh model per variant of an ablation axis.
    Ablate {
        /// hops, frames, dcl or highorder.
        #[arg(long)]
        axis: String,
        /// Dataset; a synthetic one is generated when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        csv: bool,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        count: usize,
        #[arg(long, default_value_t = 3)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        /// Skeleton TOML file or built-in name.
        #[arg(long, default_value = "human36m")]
        skeleton: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Hops,
    Frames,
    Dcl,
    Highorder,
}

/// A failed check; maps to exit code 3.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<CheckFailed>().is_some() {
            return 3;
        }
        if let Some(TrainError::Diverged { .. } | TrainError::NonFiniteGradient { .. }) = cause.downcast_ref() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train {
            config,
            data,
            out,
            seed,
            preset,
            csv,
        } => commands::train(config.as_deref(), &data, &out, seed, preset.as_deref(), csv),
        Command::Eval {
            checkpoint,
            data,
            csv,
            dump_poses,
        } => commands::eval(&checkpoint, &data, csv, dump_poses.as_deref()),
        Command::Graph { skeleton, k_max, csv } => commands::graph(&skeleton, k_max, csv),
        Command::Gradcheck {
            config,
            preset,
            objective,
            tolerance,
            step,
            seed,
            csv,
            max_params,
            corrupt_backward,
        } => commands::gradcheck(
            config.as_deref(),
            preset.as_deref(),
            seed,
            &commands::GradcheckOptions {
                objective,
                tolerance,
                step,
                max_params,
                corrupt_backward,
                csv,
            },
        ),
        Command::Ablate {
            axis,
            data,
            config,
            preset,
            seed,
            csv,
        } => {
            let axis = Axis::from_str(&axis, true).map_err(|_| {
                anyhow::anyhow!("unknown ablation axis `{axis}` (expected hops, frames, dcl or highorder)")
            })?;
            commands::ablate(axis, data.as_deref(), config.as_deref(), preset.as_deref(), seed, csv)
        }
        Command::Synth {
            out,
            count,
            frames,
            seed,
            noise,
            amplitude,
            skeleton,
        } => commands::synth(&out, count, frames, seed, noise, amplitude, &skeleton),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MGT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
