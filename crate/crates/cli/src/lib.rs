//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code:
//!
//! * 0: success
//! * 1: failure, or outputs written with a non-empty run ledger
//! * 2: usage error

mod args;
mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub use args::Cli;

/// Result of a subcommand that completed: how many items were recorded in
/// its ledger, and where.
#[derive(Debug)]
pub struct Outcome {
    pub failures: usize,
    pub ledger: Option<PathBuf>,
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli) {
        Ok(Outcome { failures: 0, .. }) => 0,
        Ok(Outcome { failures, ledger }) => {
            let at = ledger.map(|p| p.display().to_string()).unwrap_or_default();
            eprintln!("error[partial]: {failures} item(s) failed; ledger: {at}");
            1
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            1
        }
    }
}
