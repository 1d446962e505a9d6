mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;

use config::{Cli, Command};
use output::{CliError, Status};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(status) => ExitCode::from(status.code()),
        Err(err) => {
            eprintln!("surfalg: {err}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<Status, CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Analyze(args) => commands::analyze(&args),
        Command::Reconstruct(args) => commands::reconstruct(&args),
        Command::Holonomy(args) => commands::holonomy(&args),
        Command::Presets(args) => commands::presets(&args),
    }
}
