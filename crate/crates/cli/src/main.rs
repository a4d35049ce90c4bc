//! `bussgang` command-line front end. Every command prints one JSON document
//! that echoes its fully resolved configuration.

mod args;
mod commands;
mod mimo_config;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde::Serialize;

use args::{Cli, Command};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_PARSE: u8 = 3;
pub const EXIT_NO_CLOSED_FORM: u8 = 4;
pub const EXIT_NO_DERIVATIVE: u8 = 5;
pub const EXIT_CONFIG: u8 = 6;
pub const EXIT_VALIDATION: u8 = 7;
pub const EXIT_IO: u8 = 8;
pub const EXIT_NUMERICAL: u8 = 9;

#[derive(Debug)]
pub enum CliError {
    Core(bussgang::Error),
    Config(String),
    Usage(String),
}

impl From<bussgang::Error> for CliError {
    fn from(e: bussgang::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<mimo_config::ConfigError> for CliError {
    fn from(e: mimo_config::ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use bussgang::Error::*;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) => match e {
                Parse(_) => EXIT_PARSE,
                NoClosedForm(_) => EXIT_NO_CLOSED_FORM,
                NoDerivative(_) => EXIT_NO_DERIVATIVE,
                Io(_) => EXIT_IO,
                NotPsd { .. } | NoConvergence(_) | JointCovarianceNotPsd(_) => EXIT_NUMERICAL,
                _ => EXIT_VALIDATION,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("BUSSGANG_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| CliError::Usage(format!("BUSSGANG_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {n} worker threads: {e}")))
}

fn print<T: Serialize>(value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).expect("output serializes");
    let mut out = std::io::stdout().lock();
    writeln!(out, "{json}").map_err(|e| CliError::Core(e.into()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Gain(a) => print(&commands::gain(a)?),
        Command::Decompose(a) => print(&commands::decompose(a)?),
        Command::Rate(a) => print(&commands::rate(a)?),
        Command::TheoremCheck(a) => print(&commands::theorem_check(a)?),
        Command::Aqnm(a) => print(&commands::aqnm(a)?),
        Command::Mimo(a) => print(&commands::mimo(a)?),
        Command::Fig3(a) => print(&commands::fig3(a)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
