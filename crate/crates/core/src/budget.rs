// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

//! Error, power and feasibility accounting for the constant-α Fock-1
//! protocol, plus the simulations that calibrate its constants.
//!
//! Dynamics run in χ units. The SI entry points ([`PlatformSpec`],
//! [`feasibility`]) take angular frequencies in rad/s and powers in W.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{zeros, FockSpace, Operator, C64};
use crate::frames::{h_eta, lambda1_single, BlockadeConfig};
use crate::propagate::{fock_density, lindblad_periodic, lindblad_propagate, Scheme};
use crate::pulse::{linear_fit, period_propagator, Envelope, ModulatedPulse, ModulationProfile, ProfileKind};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

pub const C1_DEFAULT: f64 = 3.0 / 8.0;
pub const C2_DEFAULT: f64 = 1.65;

/// π⁶/4, the dimensionless part of c₃.
pub fn c3_dimensionless() -> f64 {
    PI.powi(6) / 4.0
}

/// Prefactors of ε_tot = c₁κT + c₂/(M⁴(χT)⁶) and P = c₃M²/(κ_e χ² T⁴).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl BudgetConstants {
    /// c₃ = π⁶/4: powers are then in units of ħω_c × (rate unit).
    pub fn dimensionless() -> Self {
        Self {
            c1: C1_DEFAULT,
            c2: C2_DEFAULT,
            c3: c3_dimensionless(),
        }
    }

    /// c₃ = (π⁶/4)ħω_c with ω_c in rad/s: powers in W.
    pub fn si(omega_c: f64) -> Self {
        Self {
            c3: c3_dimensionless() * HBAR * omega_c,
            ..Self::dimensionless()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub constants: BudgetConstants,
    pub t: f64,
    /// Period count as a real number; see `m_int` for the rounded value.
    pub m: f64,
    pub m_int: u64,
    pub kappa_e: f64,
    pub p_in: Option<f64>,
    pub eps_loss: f64,
    pub eps_tt: f64,
    pub eps_tot: f64,
    pub t_opt: Option<f64>,
    pub eps_opt: Option<f64>,
}

fn loss_error(c: &BudgetConstants, config: &BlockadeConfig, t: f64) -> f64 {
    c.c1 * config.kappa() * t
}

fn trotter_error(c: &BudgetConstants, config: &BlockadeConfig, t: f64, m: f64) -> f64 {
    c.c2 / (m.powi(4) * (config.chi.abs() * t).powi(6))
}

/// ε_loss, ε_tt and their sum at fixed T and M.
pub fn total_error(config: &BlockadeConfig, t: f64, m: f64, c: &BudgetConstants) -> Result<ErrorBudget> {
    config.validate()?;
    if !(t > 0.0 && m >= 1.0) {
        return Err(Error::Contract("need T > 0 and M >= 1".into()));
    }
    let eps_loss = loss_error(c, config, t);
    let eps_tt = trotter_error(c, config, t, m);
    Ok(ErrorBudget {
        constants: *c,
        t,
        m,
        m_int: m.ceil() as u64,
        kappa_e: config.kappa_e,
        p_in: power_required(config, t, m, c).ok(),
        eps_loss,
        eps_tt,
        eps_tot: eps_loss + eps_tt,
        t_opt: None,
        eps_opt: None,
    })
}

/// P_in = c₃M²/(κ_e χ² T⁴).
pub fn power_required(config: &BlockadeConfig, t: f64, m: f64, c: &BudgetConstants) -> Result<f64> {
    if config.kappa_e <= 0.0 {
        return Err(Error::UndefinedPower("kappa_e = 0 admits no input power".into()));
    }
    Ok(c.c3 * m * m / (config.kappa_e * config.chi.powi(2) * t.powi(4)))
}

/// M that spends exactly `p_in` at time T.
pub fn periods_for_power(config: &BlockadeConfig, t: f64, p_in: f64, c: &BudgetConstants) -> f64 {
    (p_in * config.kappa_e * config.chi.powi(2) * t.powi(4) / c.c3).sqrt()
}

/// Minimizes ε_tot over T at fixed input power, with M tied to the power.
pub fn optimize_budget(config: &BlockadeConfig, p_in: f64, c: &BudgetConstants) -> Result<ErrorBudget> {
    config.validate()?;
    if !(p_in > 0.0) {
        return Err(Error::Contract("P_in must be positive".into()));
    }
    if config.kappa_e <= 0.0 || config.kappa() <= 0.0 {
        return Err(Error::UndefinedPower("optimization needs kappa_e > 0".into()));
    }
    let chi = config.chi.abs();
    let (ke, k) = (config.kappa_e, config.kappa());
    let t_opt = (14.0 * c.c2 * c.c3 * c.c3 / c.c1).powf(1.0 / 15.0)
        / (p_in.powf(2.0 / 15.0) * chi.powf(2.0 / 3.0) * ke.powf(2.0 / 15.0) * k.powf(1.0 / 15.0));
    let eps_opt = 15.0 * (c.c1.powi(14) * c.c2 * c.c3 * c.c3 / 14f64.powi(14)).powf(1.0 / 15.0) * k.powf(14.0 / 15.0)
        / (p_in.powf(2.0 / 15.0) * chi.powf(2.0 / 3.0) * ke.powf(2.0 / 15.0));
    let m = periods_for_power(config, t_opt, p_in, c);
    let mut b = total_error(config, t_opt, m.max(1.0), c)?;
    b.p_in = Some(p_in);
    b.t_opt = Some(t_opt);
    b.eps_opt = Some(eps_opt);
    Ok(b)
}

/// Sets κ_e = κ_i/6, the ratio that minimizes ε_opt at fixed κ_i and power.
pub fn with_optimal_kappa_e(config: &BlockadeConfig) -> BlockadeConfig {
    BlockadeConfig {
        kappa_e: config.kappa_i / 6.0,
        ..config.clone()
    }
}

/// ε_opt at κ_e = κ_i/6 written as prefactor · κ_i^{4/5}/(P^{2/15}|χ|^{2/3}).
pub fn eps_opt_free_kappa_e(config: &BlockadeConfig, p_in: f64, c: &BudgetConstants) -> f64 {
    let pref =
        15.0 * (c.c1.powi(14) * c.c2 * c.c3 * c.c3).powf(1.0 / 15.0) / (2f64.powf(14.0 / 15.0) * 6f64.powf(4.0 / 5.0));
    pref * config.kappa_i.powf(0.8) / (p_in.powf(2.0 / 15.0) * config.chi.abs().powf(2.0 / 3.0))
}

/// Input power at which ε_opt (for the configured κ_e) equals `eps`.
pub fn power_for_eps(config: &BlockadeConfig, eps: f64, c: &BudgetConstants) -> Result<f64> {
    let at_one = optimize_budget(config, 1.0, c)?.eps_opt.unwrap_or(f64::NAN);
    Ok((at_one / eps).powf(7.5))
}

/// ε_min = 3π(κ_i/|χ|)^{2/3}/(16 Q_i^{1/3}), Q_i = ω_c/κ_i.
pub fn eps_min_bound(omega_c: f64, chi: f64, kappa_i: f64) -> f64 {
    let q = omega_c / kappa_i;
    3.0 * PI * (kappa_i / chi.abs()).powf(2.0 / 3.0) / (16.0 * q.cbrt())
}

/// Lower bound on power when the two-photon drive is free, κ_e = κ_i/5.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PowerBound {
    pub p_in: f64,
    pub kappa_e: f64,
}

/// P = 4(3πc₁)⁶/5⁵ · ħω_c κ_i⁵/(χ⁴ε⁶). `hbar_omega` is ħω_c in the caller's
/// energy unit (1 in dimensionless mode).
pub fn power_lower_bound(config: &BlockadeConfig, eps: f64, hbar_omega: f64, c1: f64) -> Result<PowerBound> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Contract("target infidelity must lie in (0, 1)".into()));
    }
    let p = 4.0 * (3.0 * PI * c1).powi(6) / 5f64.powi(5) * hbar_omega * config.kappa_i.powi(5)
        / (config.chi.powi(4) * eps.powi(6));
    Ok(PowerBound {
        p_in: p,
        kappa_e: config.kappa_i / 5.0,
    })
}

/// ε(P) = c₁(π/2)(κ_e+κ_i)κ_e^{−1/6}(4ħω_c/(Pχ⁴))^{1/6}.
pub fn eps_from_power(config: &BlockadeConfig, p_in: f64, hbar_omega: f64, c1: f64) -> f64 {
    c1 * 0.5
        * PI
        * config.kappa()
        * config.kappa_e.powf(-1.0 / 6.0)
        * (4.0 * hbar_omega / (p_in * config.chi.powi(4))).powf(1.0 / 6.0)
}

/// A device, SI units: angular frequencies in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformSpec {
    pub name: String,
    pub omega_c: f64,
    pub chi: f64,
    pub kappa_i: f64,
}

impl PlatformSpec {
    pub fn validate(&self) -> Result<()> {
        for (v, n) in [(self.omega_c, "omega_c"), (self.chi, "chi"), (self.kappa_i, "kappa_i")] {
            if !(v.is_finite() && v.abs() > 0.0) {
                return Err(Error::Config(format!("{}: {n} must be nonzero", self.name)));
            }
        }
        if self.omega_c < 0.0 || self.kappa_i < 0.0 {
            return Err(Error::Config(format!(
                "{}: omega_c and kappa_i must be positive",
                self.name
            )));
        }
        Ok(())
    }

    /// Config with κ_e = κ_i/6 and ω_c set.
    pub fn config(&self) -> Result<BlockadeConfig> {
        let mut c = BlockadeConfig::new(self.chi, 0.0, 1)?.with_loss(self.kappa_i, self.kappa_i / 6.0)?;
        c.omega_c = Some(self.omega_c);
        Ok(c)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogRow {
    name: String,
    omega_c_hz: f64,
    chi_hz: f64,
    kappa_i_hz: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    #[allow(dead_code)]
    schema: String,
    #[allow(dead_code)]
    note: Option<String>,
    platforms: Vec<CatalogRow>,
}

/// Parses a catalog whose rows give ω/2π in Hz.
pub fn parse_catalog(json: &str) -> Result<Vec<PlatformSpec>> {
    let file: CatalogFile = serde_json::from_str(json).map_err(|e| Error::Config(format!("platform catalog: {e}")))?;
    let rows: Vec<PlatformSpec> = file
        .platforms
        .into_iter()
        .map(|r| PlatformSpec {
            name: r.name,
            omega_c: 2.0 * PI * r.omega_c_hz,
            chi: 2.0 * PI * r.chi_hz,
            kappa_i: 2.0 * PI * r.kappa_i_hz,
        })
        .collect();
    for r in &rows {
        r.validate()?;
    }
    Ok(rows)
}

/// The bundled platform table.
pub fn bundled_catalog() -> Vec<PlatformSpec> {
    parse_catalog(include_str!("../data/platforms.json")).expect("bundled catalog is valid")
}

pub fn platform(name: &str) -> Option<PlatformSpec> {
    bundled_catalog().into_iter().find(|p| p.name == name)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RwaRatios {
    pub omega_r_over_omega_c: f64,
    pub alpha_omega_r2_over_omega_c2: f64,
    pub chi_alpha3_over_omega_c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub platform: String,
    pub target_infidelity: f64,
    pub eps_min: f64,
    pub feasible: bool,
    pub p_in_at_target: Option<f64>,
    pub t_opt: Option<f64>,
    pub alpha_at_target: Option<f64>,
    pub m_at_target: Option<u64>,
    pub ratios: Option<RwaRatios>,
    /// One flag per ratio, set when the ratio is ≥ 1.
    pub rwa_violated: Vec<String>,
}

/// Power, drive strength and RWA ratios needed to reach `fidelity_target`
/// for Fock-1 preparation, with κ_e = κ_i/6.
pub fn feasibility(platform: &PlatformSpec, fidelity_target: f64) -> Result<FeasibilityReport> {
    platform.validate()?;
    if !(fidelity_target > 0.0 && fidelity_target < 1.0) {
        return Err(Error::Contract("fidelity target must lie in (0, 1)".into()));
    }
    let eps = 1.0 - fidelity_target;
    let eps_min = eps_min_bound(platform.omega_c, platform.chi, platform.kappa_i);
    let mut report = FeasibilityReport {
        platform: platform.name.clone(),
        target_infidelity: eps,
        eps_min,
        feasible: eps_min < eps,
        p_in_at_target: None,
        t_opt: None,
        alpha_at_target: None,
        m_at_target: None,
        ratios: None,
        rwa_violated: Vec::new(),
    };
    if !report.feasible {
        return Ok(report);
    }
    let config = platform.config()?;
    let c = BudgetConstants::si(platform.omega_c);
    let p = power_for_eps(&config, eps, &c)?;
    let b = optimize_budget(&config, p, &c)?;
    let t = b.t_opt.expect("set by optimize_budget");
    let alpha = PI / (2.0 * platform.chi.abs() * t);
    let m = b.m.ceil().max(1.0);
    let omega_r = 2.0 * PI * m / t;
    let w = platform.omega_c;
    let ratios = RwaRatios {
        omega_r_over_omega_c: omega_r / w,
        alpha_omega_r2_over_omega_c2: alpha * omega_r * omega_r / (w * w),
        chi_alpha3_over_omega_c: platform.chi.abs() * alpha.powi(3) / w,
    };
    for (v, n) in [
        (ratios.omega_r_over_omega_c, "omega_r/omega_c"),
        (ratios.alpha_omega_r2_over_omega_c2, "alpha*omega_r^2/omega_c^2"),
        (ratios.chi_alpha3_over_omega_c, "|chi|*alpha^3/omega_c"),
    ] {
        if v >= 1.0 {
            report.rwa_violated.push(n.to_string());
        }
    }
    report.p_in_at_target = Some(p);
    report.t_opt = Some(t);
    report.alpha_at_target = Some(alpha);
    report.m_at_target = Some(m as u64);
    report.ratios = Some(ratios);
    Ok(report)
}

/// Aligned text table of feasibility reports.
pub fn feasibility_table(reports: &[FeasibilityReport]) -> String {
    let mut s = format!(
        "{:<16} {:>11} {:>9} {:>11} {:>11} {:>11} {:>11} {:>11}\n",
        "platform", "eps_min", "feasible", "P_in [W]", "alpha", "wr/wc", "a*wr2/wc2", "chi*a3/wc"
    );
    let f = |v: Option<f64>| v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into());
    for r in reports {
        let (a, b, c) = r
            .ratios
            .as_ref()
            .map(|x| {
                (
                    Some(x.omega_r_over_omega_c),
                    Some(x.alpha_omega_r2_over_omega_c2),
                    Some(x.chi_alpha3_over_omega_c),
                )
            })
            .unwrap_or((None, None, None));
        s.push_str(&format!(
            "{:<16} {:>11.3e} {:>9} {:>11} {:>11} {:>11} {:>11} {:>11}\n",
            r.platform,
            r.eps_min,
            if r.feasible { "yes" } else { "no" },
            f(r.p_in_at_target),
            f(r.alpha_at_target),
            f(a),
            f(b),
            f(c)
        ));
    }
    s
}

/// 1 − ⟨1|ρ(T)|1⟩ for |0⟩ → |1⟩ under −χασ_x with κ·scale·D[σ₋],
/// T = π/(2|χα|), χα = 1.
pub fn fock1_loss_infidelity(kappa: f64, dissipator_scale: f64) -> Result<f64> {
    let mut h = zeros(2);
    h[[0, 1]] = C64::from(-1.0);
    h[[1, 0]] = C64::from(-1.0);
    let t = PI / 2.0;
    let r = lindblad_propagate(
        &fock_density(2, 0),
        &|_t: f64| h.clone(),
        kappa * dissipator_scale,
        t,
        1,
    )?;
    Ok(1.0 - r.rho[[1, 1]].re)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct C1Fit {
    pub ratios: Vec<f64>,
    pub eps_over_kappa_t: Vec<f64>,
    pub c1: f64,
}

/// ε/(κT) at κ/(χα) ∈ {1e−3, 3e−3, 1e−2}, extrapolated to κ → 0 by the
/// quadratic through the three points.
pub fn fit_c1(dissipator_scale: f64) -> Result<C1Fit> {
    let ratios = vec![1e-3, 3e-3, 1e-2];
    let t = PI / 2.0;
    let ys = ratios
        .iter()
        .map(|&k| Ok(fock1_loss_infidelity(k, dissipator_scale)? / (k * t)))
        .collect::<Result<Vec<f64>>>()?;
    // Lagrange interpolation evaluated at 0
    let mut c1 = 0.0;
    for i in 0..3 {
        let mut w = 1.0;
        for j in 0..3 {
            if i != j {
                w *= ratios[j] / (ratios[j] - ratios[i]);
            }
        }
        c1 += w * ys[i];
    }
    Ok(C1Fit {
        ratios,
        eps_over_kappa_t: ys,
        c1,
    })
}

/// One constant-α Fock-1 run with a modulated single drive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulatedRun {
    pub config: BlockadeConfig,
    pub duration: f64,
    pub alpha: f64,
    pub periods: u64,
    pub profile: ProfileKind,
    pub dim: usize,
    /// Relative amplitude error of the linear drive, applied as (1+η)Λ'₁.
    pub eta: f64,
    pub steps_per_half: usize,
}

impl ModulatedRun {
    /// α = π/(2|χ|T) and the given period count.
    pub fn fock1(config: BlockadeConfig, duration: f64, periods: u64, profile: ProfileKind, dim: usize) -> Self {
        Self {
            alpha: PI / (2.0 * config.chi.abs() * duration),
            config,
            duration,
            periods,
            profile,
            dim,
            eta: 0.0,
            steps_per_half: 16,
        }
    }

    fn pulse(&self) -> Result<ModulatedPulse> {
        Ok(ModulatedPulse::new(
            Envelope::constant(self.duration, self.alpha),
            ModulationProfile::new(self.profile.clone(), self.periods)?,
        ))
    }

    /// H_η(t) over the first period.
    fn hamiltonian(&self) -> Result<impl Fn(f64) -> Operator + '_> {
        let pulse = self.pulse()?;
        let space = FockSpace::new(self.dim)?;
        // surface dimension errors once, before the hot loop
        h_eta(C64::from(0.0), 0.0, C64::from(0.0), &self.config, space)?;
        Ok(move |t: f64| {
            let a = pulse.value(t);
            let l = lambda1_single(&pulse, &self.config, t);
            h_eta(a, self.eta, l, &self.config, space).expect("dimension checked")
        })
    }

    /// 1 − ⟨1|ρ(T)|1⟩; unitary when κ = 0, Lindblad otherwise.
    pub fn infidelity(&self) -> Result<f64> {
        let h = self.hamiltonian()?;
        let prof = ModulationProfile::new(self.profile.clone(), self.periods)?;
        let period = prof.period(self.duration);
        let breaks = self.profile.phase_breaks();
        let kappa = self.config.kappa();
        if kappa == 0.0 {
            let u = period_propagator(|t| Ok(h(t)), period, &breaks, self.steps_per_half)?;
            let u = crate::linalg::matrix_power(&u, self.periods);
            return Ok(1.0 - u[[1, 0]].norm_sqr());
        }
        let rho = lindblad_periodic(
            &fock_density(self.dim, 0),
            &h,
            kappa,
            period,
            &breaks,
            self.steps_per_half,
            self.periods,
            Scheme::Magnus4,
        )?;
        Ok(1.0 - rho[[1, 1]].re)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerPoint {
    pub kappa_i: f64,
    pub p_in: f64,
    pub t_opt: f64,
    pub periods: u64,
    pub alpha: f64,
    pub eps_closed_form: f64,
    pub eps_simulated: f64,
}

/// Simulated infidelity at the closed-form optimum for one power
/// (dimensionless units, κ_e = κ_i/6, semi-rotation profile).
pub fn power_point(kappa_i: f64, p_in: f64, dim: usize, steps_per_half: usize) -> Result<PowerPoint> {
    let config = BlockadeConfig::new(1.0, 0.0, 1)?.with_loss(kappa_i, kappa_i / 6.0)?;
    let c = BudgetConstants::dimensionless();
    let b = optimize_budget(&config, p_in, &c)?;
    let t = b.t_opt.expect("set by optimize_budget");
    let m = b.m.ceil().max(1.0) as u64;
    let mut run = ModulatedRun::fock1(config, t, m, ProfileKind::SemiRotation, dim);
    run.steps_per_half = steps_per_half;
    Ok(PowerPoint {
        kappa_i,
        p_in,
        t_opt: t,
        periods: m,
        alpha: run.alpha,
        eps_closed_form: b.eps_opt.expect("set by optimize_budget"),
        eps_simulated: run.infidelity()?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerSweep {
    pub points: Vec<PowerPoint>,
    pub slope_simulated: f64,
    pub slope_closed_form: f64,
}

/// [`power_point`] at each power (concurrently) with log-log slopes.
pub fn power_sweep(kappa_i: f64, powers: &[f64], dim: usize, steps_per_half: usize) -> Result<PowerSweep> {
    let points = powers
        .par_iter()
        .map(|&p| power_point(kappa_i, p, dim, steps_per_half))
        .collect::<Result<Vec<_>>>()?;
    let fit = |f: &dyn Fn(&PowerPoint) -> f64| {
        linear_fit(&points.iter().map(|p| (p.p_in.ln(), f(p).ln())).collect::<Vec<_>>()).1
    };
    Ok(PowerSweep {
        slope_simulated: fit(&|p| p.eps_simulated),
        slope_closed_form: fit(&|p| p.eps_closed_form),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kappa_i: f64, kappa_e: f64) -> BlockadeConfig {
        BlockadeConfig::new(1.0, 0.0, 1)
            .unwrap()
            .with_loss(kappa_i, kappa_e)
            .unwrap()
    }

    fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, rtol: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        while (b - a).abs() > rtol * (a.abs() + b.abs()) * 0.5 {
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - g * (b - a);
            d = a + g * (b - a);
        }
        0.5 * (a + b)
    }

    #[test]
    fn total_error_arithmetic() {
        let c = BudgetConstants::dimensionless();
        let b = total_error(&cfg(0.1, 0.0), 1.0, 1e6, &c).unwrap();
        assert!((b.eps_tot - 0.0375).abs() < 1e-12);
        let lossless = total_error(&cfg(0.0, 0.0), 1.0, 1e9, &c).unwrap();
        assert!(lossless.eps_tot < 1e-30);
        let a = total_error(&cfg(0.1, 0.1), 0.3, 40.0, &c).unwrap();
        let b = total_error(&cfg(0.1, 0.1), 0.3, 80.0, &c).unwrap();
        assert!((a.eps_tt / b.eps_tt - 16.0).abs() < 1e-12);
        assert!(total_error(&cfg(0.1, 0.1), 0.0, 4.0, &c).is_err());
    }

    #[test]
    fn power_scalings() {
        let c = BudgetConstants::dimensionless();
        let k = cfg(1.0, 0.2);
        let p = power_required(&k, 0.3, 50.0, &c).unwrap();
        assert!((power_required(&k, 0.3, 100.0, &c).unwrap() / p - 4.0).abs() < 1e-12);
        assert!((p / power_required(&k, 0.6, 50.0, &c).unwrap() - 16.0).abs() < 1e-12);
        assert!(matches!(
            power_required(&cfg(1.0, 0.0), 0.3, 50.0, &c),
            Err(Error::UndefinedPower(_))
        ));
    }

    #[test]
    fn optimum_is_stationary() {
        let c = BudgetConstants::dimensionless();
        let k = cfg(2.0, 0.5);
        let p = 3e9;
        let b = optimize_budget(&k, p, &c).unwrap();
        let t0 = b.t_opt.unwrap();
        let eps = |t: f64| {
            let m = periods_for_power(&k, t, p, &c);
            loss_error(&c, &k, t) + trotter_error(&c, &k, t, m)
        };
        let h = 1e-6 * t0;
        let d = (eps(t0 + h) - eps(t0 - h)) / (2.0 * h);
        assert!(d.abs() * t0 < 1e-8, "{d}");
        assert!((eps(t0) - b.eps_opt.unwrap()).abs() < 1e-12 * b.eps_opt.unwrap().max(1.0));
        let tg = golden_min(eps, 0.01 * t0, 100.0 * t0, 1e-10);
        assert!((tg / t0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn eps_opt_power_exponent() {
        let c = BudgetConstants::dimensionless();
        let k = cfg(1.0, 1.0 / 6.0);
        let e1 = optimize_budget(&k, 1e8, &c).unwrap().eps_opt.unwrap();
        let e2 = optimize_budget(&k, 1e9, &c).unwrap().eps_opt.unwrap();
        assert!((e2 / e1 - 10f64.powf(-2.0 / 15.0)).abs() < 1e-12);
    }

    #[test]
    fn free_kappa_e_prefactor_matches() {
        let c = BudgetConstants::dimensionless();
        let k = with_optimal_kappa_e(&cfg(3.0, 0.0));
        let direct = optimize_budget(&k, 5e10, &c).unwrap().eps_opt.unwrap();
        assert!((eps_opt_free_kappa_e(&k, 5e10, &c) / direct - 1.0).abs() < 1e-12);
        // κ_e = κ_i/6 is the minimum over κ_e
        for ratio in [0.1, 0.15, 0.2, 0.3] {
            let other = optimize_budget(&cfg(3.0, 3.0 * ratio), 5e10, &c)
                .unwrap()
                .eps_opt
                .unwrap();
            assert!(other >= direct * (1.0 - 1e-12));
        }
    }

    #[test]
    fn tenfold_loss_needs_million_fold_power() {
        let c = BudgetConstants::dimensionless();
        let a = with_optimal_kappa_e(&cfg(0.5, 0.0));
        let b = with_optimal_kappa_e(&cfg(5.0, 0.0));
        let pa = power_for_eps(&a, 0.1, &c).unwrap();
        let pb = power_for_eps(&b, 0.1, &c).unwrap();
        assert!((pb / pa / 1e6 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn power_bound_pair() {
        let k = cfg(2.0, 0.4);
        let b = power_lower_bound(&k, 0.02, 1.0, C1_DEFAULT).unwrap();
        let b2 = power_lower_bound(&k, 0.01, 1.0, C1_DEFAULT).unwrap();
        assert!((b2.p_in / b.p_in - 64.0).abs() < 1e-9);
        let b3 = power_lower_bound(&cfg(4.0, 0.8), 0.02, 1.0, C1_DEFAULT).unwrap();
        assert!((b3.p_in / b.p_in - 32.0).abs() < 1e-9);
        let back = eps_from_power(&cfg(2.0, b.kappa_e), b.p_in, 1.0, C1_DEFAULT);
        assert!((back - 0.02).abs() < 1e-10);
    }

    #[test]
    fn dimensionless_outputs_scale_free() {
        let c = BudgetConstants::dimensionless();
        let base = cfg(1.3, 0.2);
        let s = 7.5;
        let scaled = BlockadeConfig::new(s, 0.0, 1)
            .unwrap()
            .with_loss(1.3 * s, 0.2 * s)
            .unwrap();
        let a = total_error(&base, 0.4, 30.0, &c).unwrap();
        let b = total_error(&scaled, 0.4 / s, 30.0, &c).unwrap();
        assert!((a.eps_tot / b.eps_tot - 1.0).abs() < 1e-12);
        assert!((eps_min_bound(100.0, 1.0, 2.0) / eps_min_bound(100.0 * s, s, 2.0 * s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_error_terms() {
        let c = BudgetConstants::dimensionless();
        let k = cfg(0.7, 0.1);
        let mut prev: Option<ErrorBudget> = None;
        for i in 1..30 {
            let b = total_error(&k, 0.05 * i as f64, 40.0, &c).unwrap();
            if let Some(p) = prev {
                assert!(b.eps_loss > p.eps_loss && b.eps_tt < p.eps_tt);
            }
            prev = Some(b);
        }
        for m in 1..30 {
            let a = total_error(&k, 0.3, m as f64, &c).unwrap();
            let b = total_error(&k, 0.3, (m + 1) as f64, &c).unwrap();
            assert!(b.eps_tt < a.eps_tt);
        }
    }

    #[test]
    fn catalog_loads() {
        let cat = bundled_catalog();
        assert_eq!(cat.len(), 7);
        assert!(platform("GaAs").is_some());
        assert!(parse_catalog(
            r#"{"schema":"x","platforms":[{"name":"a","omega_c_hz":1,"chi_hz":1,"kappa_i_hz":1,"extra":2}]}"#
        )
        .is_err());
    }

    #[test]
    fn ge_and_ring_are_infeasible() {
        let ge = feasibility(&platform("Ge").unwrap(), 0.9).unwrap();
        assert!(!ge.feasible && (ge.eps_min - 1.76).abs() < 0.03 * 1.76);
        let ring = feasibility(&platform("ring-resonator").unwrap(), 0.9).unwrap();
        assert!(!ring.feasible && (ring.eps_min / 102.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn gaas_violates_rwa() {
        let r = feasibility(&platform("GaAs").unwrap(), 0.9).unwrap();
        assert!(r.feasible);
        assert!(r.rwa_violated.iter().any(|s| s.starts_with("alpha")));
        assert!(feasibility_table(&[r]).contains("GaAs"));
    }

    #[test]
    fn loss_free_fock1_is_exact() {
        assert!(fock1_loss_infidelity(0.0, 1.0).unwrap() < 1e-10);
    }

    #[test]
    fn c1_extrapolation() {
        let fit = fit_c1(1.0).unwrap();
        assert!((fit.c1 / 0.375 - 1.0).abs() < 0.01, "{}", fit.c1);
        assert!((fit.eps_over_kappa_t[0] / 0.375 - 1.0).abs() < 0.01);
        let twice = fit_c1(2.0).unwrap();
        assert!((twice.c1 / fit.c1 - 2.0).abs() < 0.02);
    }
}
