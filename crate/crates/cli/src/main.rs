mod commands;
mod plot;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "zcmes", version, about = "Multi-energy dispatch with carbon capture: simulate, train, evaluate, compare")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Scenario JSON; takes precedence over --case.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Shipped scenario 1 to 4.
    #[arg(long, global = true, default_value_t = 1)]
    pub case: u8,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, env = "ZCMES_OUT", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate load and weather CSVs and freeze a scenario around them.
    Ingest {
        #[arg(long)]
        loads: PathBuf,
        #[arg(long)]
        weather: PathBuf,
    },
    /// Write synthetic load and weather series.
    Synth {
        #[arg(long, default_value_t = 168)]
        horizon: usize,
    },
    /// Train an agent.
    Train {
        #[arg(long, value_enum, default_value_t = AlgoArg::Sac)]
        algo: AlgoArg,
        #[arg(long, default_value_t = 20_000)]
        steps: usize,
        /// Starting hyperparameters.
        #[arg(long, value_enum, default_value_t = Preset::Tuned)]
        preset: Preset,
        /// Hyperparameter JSON overriding the preset.
        #[arg(long)]
        hyperparams: Option<PathBuf>,
        /// Keep the full-size networks and batches instead of desk-sized ones.
        #[arg(long)]
        full_size: bool,
    },
    /// Roll out an agent or a baseline and report costs and emissions.
    Evaluate {
        /// Directory written by `train`.
        #[arg(long, conflicts_with = "baseline")]
        agent: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<BaselineArg>,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[command(flatten)]
        pso: PsoArgs,
    },
    /// Tabulate evaluated runs against a baseline.
    Compare {
        /// Report files written by `evaluate`.
        reports: Vec<PathBuf>,
        /// Add a freshly computed PSO row.
        #[arg(long)]
        pso: bool,
        /// Add a freshly computed greedy row.
        #[arg(long)]
        greedy: bool,
        /// Method the improvement column is measured against.
        #[arg(long)]
        baseline: Option<String>,
        #[command(flatten)]
        pso_args: PsoArgs,
    },
    /// Re-optimize with PSO over a list of carbon prices.
    SweepCarbon {
        /// Comma-separated prices in $/t.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        prices: Option<Vec<f64>>,
        #[arg(long, default_value_t = 30.0)]
        from: f64,
        #[arg(long, default_value_t = 500.0)]
        to: f64,
        #[arg(long, default_value_t = 50.0)]
        step: f64,
        #[command(flatten)]
        pso: PsoArgs,
    },
    /// Hyperparameter search; resumes an existing study file.
    Tune {
        #[arg(long, value_enum, default_value_t = AlgoArg::Sac)]
        algo: AlgoArg,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 30_000)]
        steps_per_trial: usize,
        #[arg(long, default_value_t = 5)]
        eval_episodes: usize,
        /// Study file; defaults to study.jsonl in the output directory.
        #[arg(long)]
        study: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct PsoArgs {
    /// Swarms averaged per slot.
    #[arg(long, default_value_t = 200)]
    pub pso_samples: usize,
    #[arg(long, default_value_t = 30)]
    pub pso_particles: usize,
    #[arg(long, default_value_t = 100)]
    pub pso_iters: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoArg {
    Sac,
    Td3,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Tuned,
    Untuned,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineArg {
    Pso,
    Greedy,
}

/// Usage problems exit with 2, everything else with 1.
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

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
