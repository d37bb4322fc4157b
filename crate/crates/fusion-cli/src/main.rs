//! `fusion`: command-line front end for fused-data semiparametric calculus.
//!
//! Exit codes: 0 success, 2 validation failure, 3 numerical failure, 64 usage error or
//! malformed input.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use fusion_core::ErrorClass;

use crate::args::Cli;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

/// Failure of a subcommand, mapped to an exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(fusion_core::Error),
    /// The command ran and its result is a validation failure (report already written).
    Validation,
    /// The command ran and its result is a numerical failure (report already written).
    Numerical,
}

impl From<fusion_core::Error> for Failure {
    fn from(e: fusion_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = match f {
                Failure::Usage(msg) => {
                    eprintln!("error: {msg}");
                    EXIT_USAGE
                }
                Failure::Core(e) => {
                    eprintln!("error: {e}");
                    match e.class() {
                        ErrorClass::Input => EXIT_USAGE,
                        ErrorClass::Validation => EXIT_VALIDATION,
                        ErrorClass::Numerical => EXIT_NUMERICAL,
                    }
                }
                Failure::Validation => EXIT_VALIDATION,
                Failure::Numerical => EXIT_NUMERICAL,
            };
            ExitCode::from(code)
        }
    }
}
