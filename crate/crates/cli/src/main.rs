mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "hetgraph", version, about = "Heterogeneous multi-agent trajectory prediction")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; flags override the config file.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML file with [data], [model], [train] and [eval] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// plain | mixup | TF | TF_plus | GE | GE_mixup
    #[arg(long, global = true)]
    pub strategy: Option<String>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Stochastic rollouts per scene for evaluation.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a synthetic dataset and write train/val/test CSVs plus the normalization sidecar.
    GenData,
    /// Train a model and write best.ckpt, last.ckpt and train_log.csv.
    Train {
        /// Directory produced by gen-data; generated in memory when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from `<out>/last.ckpt`.
        #[arg(long)]
        resume: bool,
    },
    /// Score a checkpoint on a dataset split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Check the entropy minimum, the accumulation bounds and majorization.
    VerifyTheory {
        /// entropy | bounds | majorization | all
        #[arg(long, default_value = "all")]
        check: String,
        /// Largest graph size enumerated by the entropy check.
        #[arg(long, default_value_t = 6)]
        max_n: usize,
        /// Trials for the bounds and majorization checks.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Graph statistics, edge-quality rates, selected graphs and trajectory plots.
    AnalyzeGraphs {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train and evaluate once per penalty weight in `eval.gammas`.
    SweepGamma {
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
