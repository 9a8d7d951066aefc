// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::fock::Operator;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("t = {t} outside [0, {duration}]")]
    Domain { t: f64, duration: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("undefined power: {0}")]
    UndefinedPower(String),

    /// Step cap reached before the tolerance was met. Carries the finest
    /// result computed so far.
    #[error("no convergence after {steps} steps (residual {residual:.3e})")]
    Convergence {
        steps: usize,
        residual: f64,
        best: Box<Operator>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
