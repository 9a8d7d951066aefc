// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

//! Frame Hamiltonians of the driven Kerr resonator and the translation of a
//! displaced-frame control α(t) into lab-frame drive programs.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockSpace, Operator, C64, I, ZERO};
use crate::pulse::{Envelope, ModulatedPulse, ModulationProfile};
use crate::quad;

/// Physical parameters. Energies and rates share one unit (|χ| by default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockadeConfig {
    pub chi: f64,
    #[serde(default)]
    pub delta0: f64,
    pub r: usize,
    #[serde(default)]
    pub kappa_i: f64,
    #[serde(default)]
    pub kappa_e: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_c: Option<f64>,
}

impl BlockadeConfig {
    /// Lossless configuration.
    pub fn new(chi: f64, delta0: f64, r: usize) -> Result<Self> {
        let c = Self {
            chi,
            delta0,
            r,
            kappa_i: 0.0,
            kappa_e: 0.0,
            omega_c: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_loss(mut self, kappa_i: f64, kappa_e: f64) -> Result<Self> {
        self.kappa_i = kappa_i;
        self.kappa_e = kappa_e;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 1 {
            return Err(Error::Config("r must be at least 1".into()));
        }
        if !(self.chi.is_finite() && self.chi != 0.0) {
            return Err(Error::Config("chi must be finite and nonzero".into()));
        }
        if !self.delta0.is_finite() {
            return Err(Error::Config("delta0 must be finite".into()));
        }
        if !(self.kappa_i >= 0.0 && self.kappa_e >= 0.0) || !self.kappa_i.is_finite() || !self.kappa_e.is_finite() {
            return Err(Error::Config("loss rates must be finite and >= 0".into()));
        }
        if let Some(w) = self.omega_c {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Config("omega_c must be positive".into()));
            }
        }
        Ok(())
    }

    /// Total loss κ = κ_i + κ_e.
    pub fn kappa(&self) -> f64 {
        self.kappa_i + self.kappa_e
    }

    /// Blockade subspace dimension N = r + 1.
    pub fn n(&self) -> usize {
        self.r + 1
    }
}

/// Diagonal plus one- and two-photon ladder couplings:
/// Σ d_n|n⟩⟨n| + Σ [c1_n √(n+1) |n+1⟩⟨n| + c2 √((n+1)(n+2)) |n+2⟩⟨n| + h.c.].
fn ladder(space: FockSpace, diag: impl Fn(usize) -> f64, one: impl Fn(usize) -> C64, two: C64) -> Operator {
    let d = space.dim();
    let mut h = Array2::zeros((d, d));
    for n in 0..d {
        h[[n, n]] = C64::from(diag(n));
        if n + 1 < d {
            let v = one(n) * ((n + 1) as f64).sqrt();
            h[[n + 1, n]] = v;
            h[[n, n + 1]] = v.conj();
        }
        if n + 2 < d && two != ZERO {
            let v = two * (((n + 1) * (n + 2)) as f64).sqrt();
            h[[n + 2, n]] = v;
            h[[n, n + 2]] = v.conj();
        }
    }
    h
}

fn kerr_diag(chi: f64) -> impl Fn(usize) -> f64 {
    move |n| 0.5 * chi * (n * n.saturating_sub(1)) as f64
}

/// Blockade Hamiltonian (χ/2)a†²a² + Δ₀n + [χα a†(n−r) + h.c.].
pub fn h_dr(alpha: C64, config: &BlockadeConfig, space: FockSpace) -> Result<Operator> {
    space.require_above(config.r, 1)?;
    let (chi, d0, r) = (config.chi, config.delta0, config.r as f64);
    Ok(ladder(
        space,
        |n| kerr_diag(chi)(n) + d0 * n as f64,
        |n| chi * alpha * (n as f64 - r),
        ZERO,
    ))
}

/// Projection of [`h_dr`] onto the blockade subspace.
#[derive(Debug, Clone)]
pub struct ProjectedHamiltonians {
    pub drift: Operator,
    pub control_re: Operator,
    pub control_im: Operator,
}

impl ProjectedHamiltonians {
    /// H_d0 + χ Re(α) H_cR + χ Im(α) H_cI.
    pub fn assemble(&self, chi: f64, alpha: C64) -> Operator {
        let mut h = self.drift.clone();
        h.scaled_add(C64::from(chi * alpha.re), &self.control_re);
        h.scaled_add(C64::from(chi * alpha.im), &self.control_im);
        h
    }
}

pub fn h_dr_projected(config: &BlockadeConfig) -> Result<ProjectedHamiltonians> {
    config.validate()?;
    let space = FockSpace::new(config.n())?;
    let (chi, d0, r) = (config.chi, config.delta0, config.r as f64);
    let drift = ladder(space, |n| kerr_diag(chi)(n) + d0 * n as f64, |_| ZERO, ZERO);
    let control_re = ladder(space, |_| 0.0, |n| C64::from(n as f64 - r), ZERO);
    let control_im = ladder(space, |_| 0.0, |n| I * (n as f64 - r), ZERO);
    Ok(ProjectedHamiltonians {
        drift,
        control_re,
        control_im,
    })
}

/// Single-drive frame Hamiltonian with the induced two-photon term:
/// (χ/2)a†²a² + [χα̃ a†(n−r) + h.c.] + [(χ/2)α̃² a†² + h.c.].
/// The detuning is not part of this frame.
pub fn h_dr_prime(alpha_tilde: C64, config: &BlockadeConfig, space: FockSpace) -> Result<Operator> {
    h_eta(alpha_tilde, 0.0, ZERO, config, space)
}

/// Only the [(χ/2)α̃² a†² + h.c.] piece of [`h_dr_prime`].
pub fn two_photon_part(alpha_tilde: C64, config: &BlockadeConfig, space: FockSpace) -> Result<Operator> {
    space.require_above(config.r, 2)?;
    Ok(ladder(
        space,
        |_| 0.0,
        |_| ZERO,
        0.5 * config.chi * alpha_tilde * alpha_tilde,
    ))
}

/// [`h_dr_prime`] plus a miscalibrated linear drive [ηΛ₁ a† + h.c.].
pub fn h_eta(alpha_tilde: C64, eta: f64, lambda1: C64, config: &BlockadeConfig, space: FockSpace) -> Result<Operator> {
    space.require_above(config.r, 2)?;
    let (chi, r) = (config.chi, config.r as f64);
    let extra = eta * lambda1;
    Ok(ladder(
        space,
        kerr_diag(chi),
        |n| chi * alpha_tilde * (n as f64 - r) + extra,
        0.5 * chi * alpha_tilde * alpha_tilde,
    ))
}

/// (χ/2)a†²a² + [χα a†n + (χ/2)α² a†² + Λ a† + h.c.].
pub fn h_dr_new(alpha_new: C64, lambda1_new: C64, config: &BlockadeConfig, space: FockSpace) -> Result<Operator> {
    space.require_above(config.r, 2)?;
    let chi = config.chi;
    Ok(ladder(
        space,
        kerr_diag(chi),
        |n| chi * alpha_new * n as f64 + lambda1_new,
        0.5 * chi * alpha_new * alpha_new,
    ))
}

/// Sampled lab-frame drive amplitudes and accumulated carrier phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveProgram {
    pub times: Vec<f64>,
    pub lambda1: Vec<C64>,
    pub lambda2: Vec<C64>,
    pub phase: Vec<f64>,
}

impl DriveProgram {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Columns t, Re Λ₁, Im Λ₁, Re Λ₂, Im Λ₂, θ with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,re_lambda1,im_lambda1,re_lambda2,im_lambda2,theta\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[i],
                self.lambda1[i].re,
                self.lambda1[i].im,
                self.lambda2[i].re,
                self.lambda2[i].im,
                self.phase[i]
            );
        }
        out
    }
}

/// JSON export: the program together with what produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriveExport {
    pub config: BlockadeConfig,
    pub duration: f64,
    pub coefficients: Vec<C64>,
    pub profile: Option<ModulationProfile>,
    pub program: DriveProgram,
}

fn grid(duration: f64, samples: usize) -> Result<Vec<f64>> {
    if samples < 2 {
        return Err(Error::Contract("need at least 2 samples".into()));
    }
    let last = (samples - 1) as f64;
    Ok((0..samples).map(|i| duration * i as f64 / last).collect())
}

/// Two-drive translation of α(t):
/// Λ₁ = χα(2|α|²−r) − Δ₀α + iα̇ (+ iκα/2), Λ₂ = −(χ/2)α²,
/// θ(t) = (ω_c − Δ₀)t + ∫₀ᵗ 2χ|α|².
pub fn drives_from_alpha(
    pulse: &Envelope,
    config: &BlockadeConfig,
    samples: usize,
    include_loss_correction: bool,
) -> Result<DriveProgram> {
    let times = grid(pulse.duration(), samples)?;
    let chi = config.chi;
    let r = config.r as f64;
    let loss = if include_loss_correction {
        0.5 * config.kappa()
    } else {
        0.0
    };
    let omega = config.omega_c.unwrap_or(0.0) - config.delta0;
    let mut p = DriveProgram {
        times: times.clone(),
        lambda1: Vec::with_capacity(samples),
        lambda2: Vec::with_capacity(samples),
        phase: Vec::with_capacity(samples),
    };
    for &t in &times {
        let a = pulse.value(t);
        let da = pulse.derivative(t);
        p.lambda1
            .push(chi * a * (2.0 * a.norm_sqr() - r) - config.delta0 * a + I * da + I * loss * a);
        p.lambda2.push(-0.5 * chi * a * a);
        p.phase.push(omega * t + 2.0 * chi * pulse.abs2_integral(t));
    }
    p.phase[0] = 0.0;
    Ok(p)
}

/// Single-drive translation of α̃(t):
/// Λ'₁ = χα̃(|α̃|²−r) + i dα̃/dt + iκα̃/2, Λ₂ ≡ 0, θ(t) = ω_c t + ∫₀ᵗ 2χ|α̃|².
pub fn drive_single_from_alpha_tilde(
    alpha_tilde: &ModulatedPulse,
    config: &BlockadeConfig,
    samples: usize,
) -> Result<DriveProgram> {
    let duration = alpha_tilde.duration();
    let times = grid(duration, samples)?;
    let chi = config.chi;
    let omega = config.omega_c.unwrap_or(0.0);
    let breaks = alpha_tilde.profile.breakpoints(duration);
    let mut p = DriveProgram {
        times: times.clone(),
        lambda1: Vec::with_capacity(samples),
        lambda2: vec![ZERO; samples],
        phase: Vec::with_capacity(samples),
    };
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &t in &times {
        if t > prev {
            acc += quad::integrate(|s| C64::from(alpha_tilde.value(s).norm_sqr()), prev, t, &breaks, 1e-13).re;
            prev = t;
        }
        p.lambda1.push(lambda1_single(alpha_tilde, config, t));
        p.phase.push(omega * t + 2.0 * chi * acc);
    }
    Ok(p)
}

/// Λ'₁ at one time.
pub fn lambda1_single(alpha_tilde: &ModulatedPulse, config: &BlockadeConfig, t: f64) -> C64 {
    let a = alpha_tilde.value(t);
    let da = alpha_tilde.derivative(t);
    config.chi * a * (a.norm_sqr() - config.r as f64) + I * da + I * 0.5 * config.kappa() * a
}
