//! Experiment runner for the `cdit` solver: config parsing, seeded batch
//! solves, exploitability evaluation, plot data and the oracle suite.

pub mod config;
pub mod marginal;
pub mod output;
pub mod runner;
pub mod suite;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    /// Artifacts an earlier stage should have written are absent.
    #[error("missing artifacts: {0}")]
    Missing(String),

    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Solver(#[from] cdit::Error),
}

impl CliError {
    /// Process exit code: 1 for every runtime or config failure. Code 2 is
    /// reserved for a failing oracle suite.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}
