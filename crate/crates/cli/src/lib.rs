//! Subcommands of the `chemimg` binary.

use std::fmt;

use chemimg_nn::{NnError, TrainError};

pub mod commands;
pub mod controls;
pub mod experiment;

/// Exit status classes: 1 for usage, 2 for bad input data, 3 for internal failures.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "data error: {e:#}"),
            CliError::Internal(e) => write!(f, "internal error: {e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

pub(crate) fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::Network(NnError::Config(m)) => CliError::Usage(m),
        TrainError::InvalidSetup(_) | TrainError::Loss(_) => CliError::Data(e.into()),
        TrainError::Network(_) | TrainError::NonFinite(_) => CliError::Internal(e.into()),
    }
}

/// Size the global rayon pool from `CHEMIMG_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("CHEMIMG_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("CHEMIMG_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.into()))
}
