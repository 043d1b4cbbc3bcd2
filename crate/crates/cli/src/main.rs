//! `ecl`: runs adaptive designs, importance-sampling estimates and Monte Carlo
//! oracles from a JSON experiment config.

mod commands;
mod config;
mod external;
mod results;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::RunOptions;
use crate::config::{ExperimentConfig, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("simulator failure: {0}")]
    Simulator(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Simulator(_) => 3,
            Self::Io(_) | Self::Other(_) => 1,
        }
    }
}

impl From<ecl_core::Error> for CliError {
    fn from(e: ecl_core::Error) -> Self {
        use ecl_core::Error as E;
        match e {
            E::Config(_) | E::InvalidData(_) | E::ParameterDomain(_) => Self::Config(e.to_string()),
            E::Simulator { .. } => Self::Simulator(e.to_string()),
            other => Self::Other(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ecl", version, about = "Entropy-based adaptive designs and failure-probability estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of repetitions; overrides the config.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads; repetitions run in parallel.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Skip repetitions already completed in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Adaptive ECL design.
    Design(Common),
    /// Importance-sampling estimate from a saved surrogate.
    Mfis {
        #[command(flatten)]
        common: Common,
        /// Surrogate model; `{rep}` expands to the repetition index.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Direct Monte Carlo on the true function.
    Oracle(Common),
    /// Space-filling baseline of the same size as the adaptive design.
    Baseline(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, model) = match &cli.command {
        Command::Design(c) | Command::Oracle(c) | Command::Baseline(c) => (c, None),
        Command::Mfis { common, model } => (common, model.as_deref()),
    };
    if common.workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let overrides = Overrides {
        seed: common.seed,
        reps: common.reps,
    };
    let cfg = ExperimentConfig::load(&common.config, &overrides)?;
    std::fs::create_dir_all(&common.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", common.out.display())))?;
    cfg.write_echo(&common.out.join("config.json"))?;
    let opts = RunOptions {
        out: common.out.clone(),
        workers: common.workers,
        resume: common.resume,
    };
    match &cli.command {
        Command::Design(_) if cfg.external.is_some() => {
            match external::step(&cfg, &opts.out)? {
                external::Status::Awaiting { n } => eprintln!(
                    "{n} inputs written to {}; put responses in {} and rerun",
                    opts.out.join(external::PENDING).display(),
                    opts.out.join(external::RESPONSES).display()
                ),
                external::Status::Complete => eprintln!("design complete"),
            }
            Ok(())
        }
        Command::Design(_) => commands::cmd_design(&cfg, &opts),
        Command::Baseline(_) => commands::cmd_baseline(&cfg, &opts),
        Command::Oracle(_) => commands::cmd_oracle(&cfg, &opts),
        Command::Mfis { .. } => commands::cmd_mfis(&cfg, &opts, model),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
