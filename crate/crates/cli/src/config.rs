// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

//! Run configuration as read from `--config`.
//!
//! Every struct rejects unknown keys. A config carries the physical system
//! plus one optional section per subcommand; only the section matching the
//! invoked subcommand is read.

use std::path::Path;

use blockade_core::fock::{Operator, C64};
use blockade_core::frames::BlockadeConfig;
use blockade_core::optimizer::{drift_target, fourier_target, permutation_target, StepRule, Task};
use blockade_core::propagate::fock_state;
use blockade_core::pulse::{ProfileKind, TrotterScanSpec};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "version")]
    pub version: u32,
    #[serde(default = "default_system")]
    pub system: BlockadeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesize: Option<SynthesizeTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulate: Option<ModulateTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trotter_scan: Option<TrotterScanTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<FeasibilityTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub universality: Option<UniversalityTask>,
}

fn version() -> u32 {
    CONFIG_VERSION
}

fn default_system() -> BlockadeConfig {
    BlockadeConfig::new(1.0, 0.0, 1).expect("default system is valid")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if c.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                c.version
            )));
        }
        c.system.validate()?;
        Ok(c)
    }
}

/// What the pulse should implement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// |m⟩ → |m−1 mod N⟩.
    // empty braces rather than unit variants: serde only rejects unknown
    // keys on struct variants of a tagged enum
    Permutation {},
    Fourier {},
    /// exp(−iH_d0 T), reached by the zero pulse.
    Drift {},
    /// Row-major N×N matrix of [re, im] pairs.
    Matrix {
        rows: Vec<Vec<C64>>,
    },
    /// |from⟩ → |to⟩ within the blockade subspace.
    Fock {
        from: usize,
        to: usize,
    },
    State {
        initial: Vec<C64>,
        target: Vec<C64>,
    },
}

impl TargetSpec {
    pub fn task(&self, system: &BlockadeConfig, duration: f64) -> Result<Task, CliError> {
        let n = system.n();
        let gate = |target: Operator| Task::Gate { target };
        Ok(match self {
            TargetSpec::Permutation {} => gate(permutation_target(n)),
            TargetSpec::Fourier {} => gate(fourier_target(n)),
            TargetSpec::Drift {} => gate(drift_target(system, duration)?),
            TargetSpec::Matrix { rows } => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(CliError::Config(format!("target matrix must be {n}x{n}")));
                }
                gate(Operator::from_shape_fn((n, n), |(i, j)| rows[i][j]))
            }
            TargetSpec::Fock { from, to } => {
                if *from >= n || *to >= n {
                    return Err(CliError::Config(format!("Fock levels must be below {n}")));
                }
                Task::State {
                    initial: fock_state(n, *from),
                    target: fock_state(n, *to),
                }
            }
            TargetSpec::State { initial, target } => Task::State {
                initial: Array1::from(initial.clone()),
                target: Array1::from(target.clone()),
            },
        })
    }
}

fn default_samples() -> usize {
    1001
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesizeTask {
    pub target: TargetSpec,
    pub duration: f64,
    /// Fixed harmonic count; when absent k_max escalates from 4.
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default)]
    pub penalty: Option<f64>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub restarts: Option<usize>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub gradient_tolerance: Option<f64>,
    #[serde(default)]
    pub fidelity_goal: Option<f64>,
    #[serde(default)]
    pub sigma_init: Option<f64>,
    #[serde(default)]
    pub step_rule: Option<StepRule>,
    #[serde(default)]
    pub initial: Option<Vec<C64>>,
    /// Also export the single-drive program for this profile.
    #[serde(default)]
    pub profile: Option<String>,
    #[serde(default)]
    pub periods: Option<u64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Adds iκα/2 to Λ₁; on by default when κ > 0.
    #[serde(default)]
    pub include_loss_correction: Option<bool>,
}

/// Pulse given inline or by a file written by `synthesize`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSource {
    #[serde(default)]
    pub file: Option<String>,
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub coefficients: Option<Vec<C64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimulateTask {
    /// Replays a sine-ansatz pulse.
    Pulse {
        #[serde(default)]
        pulse: Option<PulseSource>,
        #[serde(default)]
        target: Option<TargetSpec>,
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default)]
        steps: Option<usize>,
        #[serde(default)]
        trajectory: bool,
    },
    /// Constant-α |0⟩ → |1⟩ preparation, α = π/(2|χ|T), optionally
    /// modulated; one row per η.
    Fock1 {
        duration: f64,
        #[serde(default)]
        profile: Option<String>,
        #[serde(default)]
        periods: Option<u64>,
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default)]
        eta: Vec<f64>,
        #[serde(default)]
        steps_per_half: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulateTask {
    pub pulse: PulseSource,
    /// Constant α instead of a sine pulse; needs `pulse.duration`.
    #[serde(default)]
    pub constant_alpha: Option<f64>,
    #[serde(default)]
    pub profile: Option<String>,
    pub periods: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrotterScanTask {
    #[serde(default)]
    pub m_values: Option<Vec<u64>>,
    #[serde(default)]
    pub chi_t_values: Option<Vec<f64>>,
    #[serde(default)]
    pub profile: Option<String>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub steps_per_half: Option<usize>,
    #[serde(default)]
    pub eps_cutoff: Option<f64>,
}

impl TrotterScanTask {
    pub fn spec(&self, profile_flag: Option<&str>) -> Result<TrotterScanSpec, CliError> {
        let d = TrotterScanSpec::default();
        let profile = match profile_flag.or(self.profile.as_deref()) {
            Some(p) => ProfileKind::parse(p)?,
            None => d.profile.clone(),
        };
        Ok(TrotterScanSpec {
            m_values: self.m_values.clone().unwrap_or(d.m_values),
            chi_t_values: self.chi_t_values.clone().unwrap_or(d.chi_t_values),
            profile,
            dim: self.dim.unwrap_or(d.dim),
            steps_per_half: self.steps_per_half.unwrap_or(d.steps_per_half),
            eps_cutoff: self.eps_cutoff.unwrap_or(d.eps_cutoff),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetTask {
    /// Input power; W with `--si`, otherwise ħω_c·(rate unit).
    #[serde(default)]
    pub p_in: Option<f64>,
    /// Target infidelity; the power that reaches it is reported.
    #[serde(default)]
    pub eps_target: Option<f64>,
    /// Evaluate ε_tot at this T and M as well.
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub periods: Option<f64>,
    /// Replace κ_e by κ_i/6.
    #[serde(default)]
    pub optimal_kappa_e: bool,
    #[serde(default)]
    pub c1: Option<f64>,
    #[serde(default)]
    pub c2: Option<f64>,
}

fn default_fidelity() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasibilityTask {
    #[serde(default)]
    pub catalog: Option<String>,
    #[serde(default)]
    pub platforms: Option<Vec<String>>,
    #[serde(default = "default_fidelity")]
    pub fidelity_target: f64,
}

fn default_r_max() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniversalityTask {
    #[serde(default = "default_r_max")]
    pub r_max: usize,
}
