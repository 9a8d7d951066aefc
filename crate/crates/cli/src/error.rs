// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] blockade_core::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    /// Outputs were written but the goal was not met.
    #[error("not converged: {0}")]
    NotConverged(String),

    #[error("infeasible: {0}")]
    Infeasible(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use blockade_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) => match e {
                E::Config(_) | E::Contract(_) | E::Dimension(_) | E::InvalidSpace(_) | E::Domain { .. } => EXIT_CONFIG,
                E::Convergence { .. } => EXIT_CONVERGENCE,
                E::UndefinedPower(_) => EXIT_INFEASIBLE,
                E::NonFinite(_) => EXIT_INTERNAL,
            },
            CliError::NotConverged(_) => EXIT_CONVERGENCE,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Io { .. } | CliError::Json(_) => EXIT_INTERNAL,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
