//! Library side of the `srnet` command-line tool.

pub mod commands;
pub mod config;
pub mod data;
pub mod pnm;
pub mod synthetic;

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    /// The error text without the category prefix.
    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Validation(m) => m.clone(),
            CliError::Runtime(e) => format!("{e:#}"),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(srnet_core::Error::io(path, e).into())
    }
}

impl From<srnet_core::Error> for CliError {
    fn from(e: srnet_core::Error) -> Self {
        use srnet_core::Error as E;
        match e {
            E::InvalidConfig(_) | E::Divisibility { .. } | E::InvalidConv(_) | E::ChannelCount { .. } => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Runtime(other.into()),
        }
    }
}
