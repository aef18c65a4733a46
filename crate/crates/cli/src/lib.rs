//! Command-line front end: runs computations and verification suites over
//! a grid of singular-point positions and writes JSON or CSV artifacts.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cmd_compute, cmd_iterate, cmd_verify, Outcome};
pub use config::{Format, RunConfig, Suite};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(#[from] fh_gauss_core::Error),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numeric(_) | CliError::Verification(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}
