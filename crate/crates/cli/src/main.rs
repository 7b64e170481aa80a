mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::ExperimentConfig;

pub const VERSION: &str = env!("GIBBSLAB_VERSION");

const EXIT_CODES: &str = "\
Exit codes:
  0   probe passed / check holds
  1   tool failure (I/O, numerical breakdown)
  2   instability found: unstable witness, divergent partition function,
      refused sampling target, non-coercive Ding functional
  3   inconclusive: probe or minimizer could not decide
  4   a numerical check failed (inequality violated, flow test residual too large)
  64  usage or config error (bad flag, malformed rational such as \"1/0\")

Environment:
  GIBBSLAB_THREADS  cap on worker threads";

#[derive(Debug, Parser)]
#[command(name = "gibbslab", version = VERSION, about = "Reproducible experiments on weighted P^1", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the budget used by the command.
    #[arg(long, global = true, value_name = "N")]
    budget: Option<u64>,
    /// Grid resolution for quadrature and the Ding functional.
    #[arg(long, global = true, value_name = "N")]
    resolution: Option<usize>,
    /// Directory for the JSON report and CSV artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Run the sampler even when the stability probe finds a witness.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One-cluster Gibbs stability probe.
    Stability,
    /// Partition function estimate.
    Partition,
    /// MCMC samples of the Gibbs point process.
    Sample,
    /// Minimize the quantized Ding functional.
    Ding,
    /// Flow and equivariance checks.
    Flows {
        #[arg(long, value_enum, default_value = "intertwine")]
        test: FlowTest,
    },
    /// Check the partition function lower bound by the Ding infimum.
    Inequality,
    /// Print the resolved config in canonical form.
    Config,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FlowTest {
    Intertwine,
    MuInvariance,
    ThreeZeros,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Unstable(String),
    #[error("{0}")]
    Tool(String),
}

impl From<gibbslab::Error> for CliError {
    fn from(e: gibbslab::Error) -> Self {
        use gibbslab::Error as E;
        match e {
            E::UnstableTarget(_) | E::DivergentPartition => CliError::Unstable(e.to_string()),
            E::NotALineBundle(_)
            | E::Unsupported(_)
            | E::WrongGenus { .. }
            | E::InvalidParameter(_) => CliError::Usage(e.to_string()),
            _ => CliError::Tool(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Tool(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Tool(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Tool(e.to_string())
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Unstable(_) => 2,
            CliError::Tool(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Passed,
    Unstable,
    Inconclusive,
    CheckFailed,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Passed => 0,
            Outcome::Unstable => 2,
            Outcome::Inconclusive => 3,
            Outcome::CheckFailed => 4,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = std::env::var("GIBBSLAB_THREADS").ok();
    if let Some(t) = threads {
        match t.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                gibbslab::par::init_threads(Some(n));
            }
            _ => {
                eprintln!("error: GIBBSLAB_THREADS must be a positive integer, got '{t}'");
                return ExitCode::from(64);
            }
        }
    }
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds.partition = s;
        cfg.seeds.sample = s;
        cfg.seeds.flows = s;
    }
    if let Some(b) = cli.budget {
        match cli.command {
            Command::Sample => cfg.budgets.sample = b,
            _ => cfg.budgets.partition = b,
        }
    }
    if let Some(r) = cli.resolution {
        cfg.resolution = r;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.to_string_lossy().into_owned();
    }
    let resolved = cfg.resolve()?;
    match cli.command {
        Command::Stability => commands::stability(&resolved),
        Command::Partition => commands::partition(&resolved),
        Command::Sample => commands::sample(&resolved, cli.force),
        Command::Ding => commands::ding(&resolved),
        Command::Flows { test } => commands::flows(&resolved, test),
        Command::Inequality => commands::inequality(&resolved),
        Command::Config => {
            print!("{}", resolved.config.to_toml());
            Ok(Outcome::Passed)
        }
    }
}
