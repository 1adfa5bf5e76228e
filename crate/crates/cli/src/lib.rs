//! The `probesense` command: offline simulation runs, single-phone probing
//! experiments, archive replay and the live gateway.

pub mod error;
pub mod manifest;
pub mod phone;
pub mod replay;
pub mod serve;
pub mod simulate;

use std::ffi::OsString;
use std::io::Write;

use clap::{Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "probesense",
    version,
    about = "WiFi probe-request crowd analytics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario end to end and write the store plus accuracy reports
    Simulate(simulate::SimulateArgs),
    /// Probing report for one phone model with a fixed screen state
    PhoneExperiment(phone::PhoneArgs),
    /// Recompute density and flows from a run's archive
    Replay(replay::ReplayArgs),
    /// Start the HTTP/WebSocket gateway over a live pipeline
    Serve(serve::ServeArgs),
}

pub fn run(cli: &Cli, w: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => simulate::simulate(a, w).map(drop),
        Command::PhoneExperiment(a) => phone::phone_experiment(a, w).map(drop),
        Command::Replay(a) => replay::replay(a, w).map(drop),
        Command::Serve(a) => serve::serve(a, w),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I, w: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli, w) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
