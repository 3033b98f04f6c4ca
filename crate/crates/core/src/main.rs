use std::process::ExitCode;

use clap::Parser;
use tclose::cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(e) => {
            eprintln!("tclose: {e}");
            ExitCode::from(2)
        }
    }
}
