use std::error::Error as StdError;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage}: data error: {message}")]
    Data { stage: &'static str, message: String },
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data { .. } => 2,
            CliError::Stage { .. } => 3,
        }
    }

    pub fn data(stage: &'static str, e: impl StdError) -> Self {
        CliError::Data {
            stage,
            message: chain(&e),
        }
    }

    pub fn stage(stage: &'static str, e: impl StdError) -> Self {
        CliError::Stage {
            stage,
            message: chain(&e),
        }
    }

    pub fn io(stage: &'static str, what: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Stage {
            stage,
            message: format!("{}: {e}", what.display()),
        }
    }
}

/// The error message followed by its sources.
fn chain(e: &dyn StdError) -> String {
    let mut out = e.to_string();
    let mut src = e.source();
    while let Some(s) = src {
        let msg = s.to_string();
        if !out.contains(&msg) {
            out.push_str(": ");
            out.push_str(&msg);
        }
        src = s.source();
    }
    out
}
