// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

//! Pulse synthesis, simulation and error budgeting for photon-blockade
//! control of a weakly nonlinear Kerr resonator.
//!
//! Energies and rates are dimensionless (units of |χ|) everywhere except
//! the SI entry points in [`budget`].

pub mod budget;
pub mod error;
pub mod fock;
pub mod frames;
pub mod lie;
pub mod linalg;
pub mod optimizer;
pub mod propagate;
pub mod pulse;
pub mod quad;

pub use error::{Error, Result};
pub use fock::{FockSpace, Operator, C64};
