//! `xmpo` command-line entry point.

mod args;
mod commands;
mod config;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use crate::args::Cli;
use crate::error::CliError;

fn parse(argv: &[String]) -> Result<Cli, clap::Error> {
    let command = Cli::command().args_override_self(true).mut_subcommands(|s| s.args_override_self(true));
    let matches = command.try_get_matches_from(argv)?;
    Cli::from_arg_matches(&matches)
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let argv = match config::merge_config(raw, &Cli::command()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = match parse(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(&cli.command, &argv) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CliError::exit_code(&e) as u8)
        }
    }
}
