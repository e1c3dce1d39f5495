//! `flowres` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use flowres::residual::InputKind;

/// How a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "flowres", version, about = "Video forgery detection from frames and flow residuals")]
pub struct Cli {
    /// TOML run config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for corpus generation, initialisation and shuffling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Root of the flow cache.
    #[arg(long, global = true, env = "FLOWRES_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Branch {
    /// RGB frames.
    Ori,
    /// Flow residuals.
    Res,
    /// Raw flow maps (baseline).
    Flow,
}

impl Branch {
    pub fn kind(self) -> InputKind {
        match self {
            Branch::Ori => InputKind::RgbFrame,
            Branch::Res => InputKind::FlowResidual,
            Branch::Flow => InputKind::FlowMap,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Ori => "ori",
            Branch::Res => "res",
            Branch::Flow => "flow",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic real/fake corpus with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        real: Option<usize>,
        #[arg(long)]
        fake: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        /// Per-frame velocity jitter of fake videos, px/frame.
        #[arg(long)]
        jitter: Option<f64>,
    },
    /// Compute (or import) flows and residuals into the cache.
    Preprocess {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Import `<dir>/<id>/flow_NNNN.flo` instead of running the solver.
        #[arg(long)]
        flow_dir: Option<PathBuf>,
    },
    /// Train one branch and write its checkpoint and epoch log.
    Train {
        #[arg(long, value_enum)]
        branch: Branch,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        flow_dir: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Defaults to `<out_dir>/<branch>.ckpt.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Overwrite an existing checkpoint.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Score the test split of each manifest and write fused reports.
    Eval {
        #[arg(long)]
        ori: PathBuf,
        #[arg(long)]
        res: PathBuf,
        /// Optional flow-map baseline for the ablation view.
        #[arg(long)]
        flow: Option<PathBuf>,
        /// Repeatable; defaults to the configured manifest.
        #[arg(long)]
        manifest: Vec<PathBuf>,
        #[arg(long)]
        flow_dir: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Print result-table rows from saved evaluation reports.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
