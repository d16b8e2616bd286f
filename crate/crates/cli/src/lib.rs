//! The `hltf` command line: data preparation, hierarchy learning,
//! recommendation with category-aware re-ranking, evaluation, synthetic data
//! and a read-only browsing service.

pub mod args;
pub mod commands;
mod error;
pub mod serve;
pub mod settings;

use std::ffi::OsString;
use std::panic::{self, AssertUnwindSafe};

use clap::error::ErrorKind;
use clap::Parser;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult};

/// Runs one subcommand. Reports meant for the terminal are returned.
pub fn run(cli: Cli) -> CliResult<Option<String>> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Prepare(a) => commands::prepare(a, config).map(|_| None),
        Command::Learn(a) => commands::learn(a, config).map(|_| None),
        Command::Recommend(a) => commands::recommend(a, config).map(|_| None),
        Command::Evaluate(a) => commands::evaluate(a, config).map(Some),
        Command::Experiment(a) => commands::experiment(a, config).map(Some),
        Command::Synth(a) => commands::synth(a, config).map(|_| None),
        Command::Serve(a) => serve::serve(a, config).map(|_| None),
    }
}

/// Parses `args`, runs, prints and returns the process exit code:
/// 0 success, 1 usage, 2 data error, 3 internal error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .try_init();
    match panic::catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(report)) => {
            if let Some(r) = report {
                print!("{r}");
            }
            0
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => 3,
    }
}
