use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use viswf_cli::{cmd_audit, cmd_selftest, cmd_simulate, exit, Manifest, Overrides};

/// Sliding-window visual-inertial filter benchmarks.
#[derive(Parser)]
#[command(name = "viswf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo runs of every configured estimator, with CSV output.
    Simulate(RunArgs),
    /// Null-space checks of every configured estimator.
    Audit(RunArgs),
    /// Fast invariant checks.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (`key = value` lines); built-in defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// 250 s runs with 100 trials.
    #[arg(long)]
    full_scale: bool,
}

impl From<RunArgs> for Overrides {
    fn from(a: RunArgs) -> Self {
        Self {
            config: a.config,
            out: a.out,
            seed: a.seed,
            trials: a.trials,
            full_scale: a.full_scale,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { exit::OK as u8 });
        }
    };
    let result = match cli.command {
        Command::Selftest => Ok(cmd_selftest()),
        Command::Simulate(a) => Manifest::load(&a.into()).and_then(|m| cmd_simulate(&m)),
        Command::Audit(a) => Manifest::load(&a.into()).and_then(|m| cmd_audit(&m)),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
