//! `interlab`: train toy model zoos, run attacks, measure interactions and
//! build experiment reports.

mod commands;
mod error;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, Result};
use crate::manifest::{ExperimentManifest, MeasureEstimator, SEED_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "interlab",
    version,
    about = "Interaction analysis of adversarial perturbations"
)]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct StageArgs {
    /// Experiment manifest (JSON); the built-in default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root shared by all stages of one experiment.
    #[arg(long)]
    out: PathBuf,
    /// Replace existing outputs of this stage.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the source and target models.
    Train(StageArgs),
    /// Attack the source model on the manifest's examples and store traces.
    Attack(StageArgs),
    /// Measure mean interactions of the stored perturbations.
    Measure {
        #[command(flatten)]
        stage: StageArgs,
        /// Overrides the manifest's estimator.
        #[arg(long, value_enum)]
        estimator: Option<MeasureEstimator>,
    },
    /// Run the sweeps and write JSON and CSV reports.
    Report(StageArgs),
    /// Run the oracle battery.
    Verify {
        /// Run a single suite.
        #[arg(long)]
        suite: Option<String>,
        /// Random cases per suite.
        #[arg(long)]
        cases: Option<usize>,
    },
    /// Print the default manifest.
    Manifest,
}

fn dispatch(cli: Cli, jobs: usize) -> Result<()> {
    let load = |s: &StageArgs| ExperimentManifest::load(s.config.as_deref());
    match cli.command {
        Command::Train(s) => commands::train(&load(&s)?, &s.out, s.force, jobs),
        Command::Attack(s) => commands::attack(&load(&s)?, &s.out, s.force, jobs),
        Command::Measure { stage, estimator } => {
            commands::measure(&load(&stage)?, &stage.out, stage.force, jobs, estimator)
        }
        Command::Report(s) => commands::report(&load(&s)?, &s.out, s.force, jobs),
        Command::Verify { suite, cases } => {
            let seed = match std::env::var(SEED_ENV) {
                Ok(v) => v.trim().parse().map_err(|_| {
                    CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
                })?,
                Err(_) => 0,
            };
            commands::verify(suite.as_deref(), cases, seed)
        }
        Command::Manifest => {
            println!("{}", ExperimentManifest::default().to_json());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let jobs = match cli.jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| dispatch(cli, jobs))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
