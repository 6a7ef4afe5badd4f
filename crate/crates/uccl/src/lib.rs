//! IO, file formats, and run orchestration around `uccl-core`: the flat
//! config file, the on-disk dataset layout, JSON checkpoints, metrics CSVs,
//! figure rendering, and the command implementations behind the `uccl` CLI.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod plot;
pub mod run;
pub mod rundir;

/// Process exit codes shared by every subcommand.
pub mod exit_codes {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const VERIFICATION_FAILED: i32 = 2;
    pub const DIVERGED: i32 = 3;
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("verification failed: {failed} of {total} checks")]
    Verification { failed: usize, total: usize },
    #[error("training diverged at step {step}: {message}")]
    Diverged { step: usize, message: String },
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => exit_codes::USAGE,
            AppError::Verification { .. } => exit_codes::VERIFICATION_FAILED,
            AppError::Diverged { .. } => exit_codes::DIVERGED,
            AppError::Other(_) => exit_codes::USAGE,
        }
    }
}
