//! `d2dra` command-line tool.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 I/O or
//! unreadable input, 4 training divergence, 5 oracle budget exceeded.

mod args;
mod commands;
mod manifest;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Invalid flags, settings or preconditions on the user's inputs.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;
pub const EXIT_BUDGET: u8 = 5;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<d2dra::Error>() {
            use d2dra::Error as E;
            return match e {
                E::Config(_) | E::InvalidArgument(_) | E::Placement { .. } | E::Shape(_) | E::UnknownGoal(_) => {
                    EXIT_USAGE
                }
                E::Version { .. } | E::Corrupt(_) | E::Io(_) => EXIT_IO,
                E::Divergence { .. } => EXIT_DIVERGED,
                E::BudgetExceeded { .. } => EXIT_BUDGET,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_IO
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Bench(a) => commands::bench(a),
        Command::Infer(a) => commands::infer(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
