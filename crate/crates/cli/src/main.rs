//! `ochoice`: simulate, discretize, fit, evaluate and analyze ordered
//! discrete choice models from the command line.

mod args;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use ochoice::{Error, Result};

use args::{Cli, Command};
use config::{AnalyzeConfig, FitConfig};
use output::{error_payload, exit_code, usage_payload, EXIT_VALIDATION};

const THREADS_VAR: &str = "OCHOICE_THREADS";

fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::InvalidConfig(format!("{THREADS_VAR} must be a positive integer, got {v:?}"))),
        },
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = thread_count()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a, threads),
        Command::Discretize(a) => commands::discretize(a, threads),
        Command::Fit(a) => commands::fit(FitConfig::resolve(a)?, a.config.as_deref(), &a.out, threads),
        Command::Evaluate(a) => commands::evaluate(a, threads),
        Command::Analyze(a) => commands::analyze(&AnalyzeConfig::resolve(a)?, a.config.as_deref(), &a.out, threads),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => {
                    let rendered = e.to_string();
                    let first = rendered.lines().next().unwrap_or_default();
                    let message = first.strip_prefix("error: ").unwrap_or(first);
                    eprintln!("{}", usage_payload(message));
                    ExitCode::from(EXIT_VALIDATION)
                }
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log::error!("{err}");
            eprintln!("{}", error_payload(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
