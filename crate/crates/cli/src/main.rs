//! `specden`: command-line front end for the deterministic-equivalent
//! solver, spectral densities and the Monte Carlo checks.

mod args;
mod config;
mod run;

use std::process::ExitCode;

use clap::Parser;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
    #[error("output: {0}")]
    Io(String),
}

impl From<specden_core::Error> for CliError {
    fn from(e: specden_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => 3,
            CliError::Input(_) | CliError::Io(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    let outcome = cli.resolve().and_then(|cfg| run::execute(&cfg).map(|files| (cfg, files)));
    match outcome {
        Ok((cfg, files)) => {
            for f in files {
                println!("{}", cfg.out.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("specden: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
