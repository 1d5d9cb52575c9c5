//! `ipsi` command-line tool. Exit codes: 0 success, 2 usage error, 3 data
//! error, 4 numeric failure. Failures print one JSON record to stderr.

mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, WithConfig};
use error::CliError;

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate(a) => {
            let a = a.resolve_config()?;
            commands::set_threads(a.threads)?;
            commands::estimate(a)
        }
        Command::Simulate(a) => {
            let a = a.resolve_config()?;
            commands::set_threads(a.threads)?;
            commands::simulate(a)
        }
        Command::Oracle(a) => {
            let a = a.resolve_config()?;
            commands::set_threads(a.threads)?;
            commands::oracle(a)
        }
        Command::Generate(a) => commands::generate(a.resolve_config()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let err = CliError::Usage(e.kind().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
