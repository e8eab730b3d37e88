//! File formats, presets, sweeps and run comparison around `lorasim-core`.

pub mod diff;
pub mod output;
pub mod presets;
pub mod scenario;
pub mod sweep;
pub mod trace;

use lorasim_core::FieldError;
use thiserror::Error;

/// Failure classes, each with its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", format_fields(.0))]
    Fields(Vec<FieldError>),
    #[error("{0}")]
    Config(String),
    #[error("simulation aborted: {0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Fields(_) | CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

fn format_fields(errs: &[FieldError]) -> String {
    errs.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}
