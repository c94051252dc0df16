//! Command implementations behind the `femnn` binary.
//!
//! Every command resolves its configuration as family defaults, then the
//! `--config` JSON file, then flags, and writes the result to
//! `resolved_config.json` in the output directory. Running a command with
//! `--config <out>/resolved_config.json` reproduces its outputs.

pub mod args;
pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

pub use args::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] femnn::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl CliError {
    /// 0 success, 1 usage or configuration, 2 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::TrainForward(a) => commands::train_forward(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::CompareBaseline(a) => commands::compare_baseline(&a),
        Command::Uq(a) => commands::uq(&a),
        Command::Identify(a) => commands::identify(&a),
        Command::GenerateSyntheticObservations(a) => commands::generate_synthetic(&a),
    }
}
