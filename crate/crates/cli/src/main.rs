//! `claclab`: train, evaluate, sweep and plot capacity-limited actor-critic
//! experiments.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Failure classes, each with its own exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("{0}")]
    Runtime(String),
    #[error("broken pipe")]
    BrokenPipe,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Diverged(_) => 4,
            CliError::Runtime(_) | CliError::BrokenPipe => 1,
        }
    }
}

impl From<claclab::Error> for CliError {
    fn from(e: claclab::Error) -> Self {
        match e {
            claclab::Error::Diverged(msg) => CliError::Diverged(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return CliError::BrokenPipe;
        }
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "claclab",
    version,
    about = "Capacity-limited actor-critic experiments"
)]
struct Cli {
    /// Worker threads for independent runs.
    #[arg(long, global = true, env = "CLACLAB_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted-path override, e.g. `agent.beta=0.5`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Base seed; overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train every configured algorithm and seed.
    Train {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Evaluate trained checkpoints under a parameter regime.
    Eval {
        /// A training output directory or a single run directory.
        checkpoint: PathBuf,
        /// train-fixed, random or extreme; all three when omitted.
        #[arg(long)]
        regime: Option<claclab::harness::EvalRegime>,
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Pick the coefficient with the best final-window return per algorithm.
    Sweep {
        /// Grid as `start:stop:step` or a comma-separated list.
        #[arg(long)]
        grid: Option<String>,
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Render SVG curves (and regime bars, if evaluated) from a training directory.
    Plot {
        /// A metrics CSV, a run directory or a training output directory.
        input: PathBuf,
        /// Where to write the SVGs; defaults to the input's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print sampled environment parameters as JSON lines.
    DumpEnv {
        /// `phases` for training resamples, otherwise an evaluation regime.
        #[arg(long, default_value = "phases")]
        regime: String,
        #[command(flatten)]
        args: ConfigArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let result = match cli.command {
        Command::Train { args } => commands::train(&args, workers),
        Command::Eval {
            checkpoint,
            regime,
            args,
        } => commands::eval(&checkpoint, regime, &args, workers),
        Command::Sweep { grid, args } => commands::sweep(grid.as_deref(), &args, workers),
        Command::Plot { input, out } => commands::plot(&input, out.as_deref()),
        Command::DumpEnv { regime, args } => commands::dump_env(&regime, &args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // A closed stdout (e.g. piped into `head`) is not a failure.
        Err(CliError::BrokenPipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("claclab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
