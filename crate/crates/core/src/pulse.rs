// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

//! Control ansatz α(t), modulation profiles f(t) and Trotter/Magnus checks.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{max_abs, FockSpace, Operator, C64, I, ZERO};
use crate::frames::{h_dr_prime, BlockadeConfig};
use crate::linalg::{matrix_exp, matrix_power};
use crate::propagate::{propagate_fixed, Scheme};
use crate::quad;

/// α(t) = Σ_k α_k sin(kπt/T), k = 1..k_max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinePulse {
    duration: f64,
    coeffs: Vec<C64>,
}

impl SinePulse {
    pub fn new(duration: f64, coeffs: Vec<C64>) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::Contract("pulse duration must be positive".into()));
        }
        if coeffs.is_empty() {
            return Err(Error::Contract("k_max must be at least 1".into()));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("pulse coefficients"));
        }
        Ok(Self { duration, coeffs })
    }

    pub fn zero(duration: f64, k_max: usize) -> Result<Self> {
        Self::new(duration, vec![ZERO; k_max])
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn k_max(&self) -> usize {
        self.coeffs.len()
    }

    fn check(&self, t: f64) -> Result<()> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(Error::Domain {
                t,
                duration: self.duration,
            });
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> Result<C64> {
        self.check(t)?;
        Ok(self.value_unchecked(t))
    }

    pub fn derivative(&self, t: f64) -> Result<C64> {
        self.check(t)?;
        Ok(self.derivative_unchecked(t))
    }

    pub fn value_unchecked(&self, t: f64) -> C64 {
        let w = PI * t / self.duration;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| c * ((i + 1) as f64 * w).sin())
            .sum()
    }

    pub fn derivative_unchecked(&self, t: f64) -> C64 {
        let w = PI / self.duration;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let k = (i + 1) as f64;
                c * (k * w) * (k * w * t).cos()
            })
            .sum()
    }

    /// sin(kπt/T) for k = 1..k_max.
    pub fn basis(&self, t: f64) -> Vec<f64> {
        let w = PI * t / self.duration;
        (1..=self.k_max()).map(|k| (k as f64 * w).sin()).collect()
    }

    /// ∫₀ᵗ |α(s)|² ds in closed form.
    pub fn abs2_integral(&self, t: f64) -> f64 {
        let tt = self.duration;
        let prim = |m: i64| -> f64 {
            if m == 0 {
                t
            } else {
                let m = m as f64;
                tt / (m * PI) * (m * PI * t / tt).sin()
            }
        };
        let mut acc = 0.0;
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in self.coeffs.iter().enumerate() {
                let (k, l) = ((i + 1) as i64, (j + 1) as i64);
                acc += (a * b.conj()).re * 0.5 * (prim(k - l) - prim(k + l));
            }
        }
        acc
    }
}

/// Slow envelope α(t): either the sine ansatz or a constant plateau.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    Sine(SinePulse),
    Constant { duration: f64, value: C64 },
}

impl Envelope {
    pub fn constant(duration: f64, value: f64) -> Self {
        Envelope::Constant {
            duration,
            value: C64::from(value),
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            Envelope::Sine(p) => p.duration(),
            Envelope::Constant { duration, .. } => *duration,
        }
    }

    pub fn value(&self, t: f64) -> C64 {
        match self {
            Envelope::Sine(p) => p.value_unchecked(t),
            Envelope::Constant { value, .. } => *value,
        }
    }

    pub fn derivative(&self, t: f64) -> C64 {
        match self {
            Envelope::Sine(p) => p.derivative_unchecked(t),
            Envelope::Constant { .. } => ZERO,
        }
    }

    pub fn abs2_integral(&self, t: f64) -> f64 {
        match self {
            Envelope::Sine(p) => p.abs2_integral(t),
            Envelope::Constant { value, .. } => value.norm_sqr() * t,
        }
    }
}

impl From<SinePulse> for Envelope {
    fn from(p: SinePulse) -> Self {
        Envelope::Sine(p)
    }
}

/// Shape of f within one period, as a function of the in-period phase s ∈ [0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    DoublePump,
    SemiRotation,
    TwoPoint,
    /// Uniform samples f(j/n), j = 0..n−1, linearly interpolated.
    Custom {
        samples: Vec<C64>,
    },
    /// Offsets the phase by `shift` periods. Breaks the reflection
    /// symmetry; exists to exercise the order checks.
    Shifted {
        base: Box<ProfileKind>,
        shift: f64,
    },
}

impl ProfileKind {
    pub fn name(&self) -> String {
        match self {
            ProfileKind::DoublePump => "double_pump".into(),
            ProfileKind::SemiRotation => "semi_rotation".into(),
            ProfileKind::TwoPoint => "two_point".into(),
            ProfileKind::Custom { .. } => "custom".into(),
            ProfileKind::Shifted { base, shift } => format!("{}+{shift}", base.name()),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "double_pump" => Ok(ProfileKind::DoublePump),
            "semi_rotation" => Ok(ProfileKind::SemiRotation),
            "two_point" => Ok(ProfileKind::TwoPoint),
            other => Err(Error::Config(format!("unknown profile '{other}'"))),
        }
    }

    pub fn at_phase(&self, s: f64) -> C64 {
        match self {
            ProfileKind::DoublePump => C64::new(1.0, SQRT_2 * (2.0 * PI * s).cos()),
            ProfileKind::SemiRotation => I * FRAC_PI_2 * C64::from_polar(1.0, -2.0 * PI * (s - 0.5).abs()),
            ProfileKind::TwoPoint => {
                if (0.25..=0.75).contains(&s) {
                    C64::from_polar(SQRT_2, FRAC_PI_4)
                } else {
                    C64::from_polar(SQRT_2, -FRAC_PI_4)
                }
            }
            ProfileKind::Custom { samples } => {
                let n = samples.len();
                let x = s * n as f64;
                let j = (x.floor() as usize).min(n - 1);
                let w = x - j as f64;
                samples[j] * (1.0 - w) + samples[(j + 1) % n] * w
            }
            ProfileKind::Shifted { base, shift } => base.at_phase(wrap(s + shift)),
        }
    }

    /// df/ds. Jumps of the two-point profile carry no derivative here; the
    /// piecewise-constant segments have zero slope.
    pub fn slope_at_phase(&self, s: f64) -> C64 {
        match self {
            ProfileKind::DoublePump => C64::new(0.0, -SQRT_2 * 2.0 * PI * (2.0 * PI * s).sin()),
            ProfileKind::SemiRotation => {
                let sign = if s > 0.5 {
                    1.0
                } else if s < 0.5 {
                    -1.0
                } else {
                    0.0
                };
                PI * PI * sign * C64::from_polar(1.0, -2.0 * PI * (s - 0.5).abs())
            }
            ProfileKind::TwoPoint => ZERO,
            ProfileKind::Custom { samples } => {
                // centered differences at the nodes, O(h²), interpolated linearly
                let n = samples.len();
                let h = 1.0 / n as f64;
                let node = |j: usize| (samples[(j + 1) % n] - samples[(j + n - 1) % n]) / (2.0 * h);
                let x = s * n as f64;
                let j = (x.floor() as usize).min(n - 1);
                let w = x - j as f64;
                node(j) * (1.0 - w) + node((j + 1) % n) * w
            }
            ProfileKind::Shifted { base, shift } => base.slope_at_phase(wrap(s + shift)),
        }
    }

    /// Phases in (0, 1) where f or its slope is not smooth.
    pub fn phase_breaks(&self) -> Vec<f64> {
        match self {
            ProfileKind::DoublePump => vec![],
            ProfileKind::SemiRotation => vec![0.5],
            ProfileKind::TwoPoint => vec![0.25, 0.75],
            ProfileKind::Custom { samples } => {
                let n = samples.len();
                (1..n).map(|j| j as f64 / n as f64).collect()
            }
            ProfileKind::Shifted { base, shift } => {
                let mut b: Vec<f64> = base
                    .phase_breaks()
                    .into_iter()
                    .chain(std::iter::once(0.0))
                    .map(|x| wrap(x - shift))
                    .filter(|&x| x > 0.0)
                    .collect();
                b.sort_by(|x, y| x.total_cmp(y));
                b
            }
        }
    }
}

fn wrap(s: f64) -> f64 {
    s - s.floor()
}

/// f(t) repeated over M periods of a pulse of duration T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationProfile {
    pub kind: ProfileKind,
    pub periods: u64,
}

impl ModulationProfile {
    pub fn new(kind: ProfileKind, periods: u64) -> Result<Self> {
        if periods == 0 {
            return Err(Error::Contract("M must be a positive integer".into()));
        }
        if let ProfileKind::Custom { samples } = &kind {
            if samples.len() < 4 {
                return Err(Error::Contract("custom profile needs at least 4 samples".into()));
            }
        }
        Ok(Self { kind, periods })
    }

    pub fn period(&self, duration: f64) -> f64 {
        duration / self.periods as f64
    }

    /// ω_r = 2πM/T.
    pub fn omega_r(&self, duration: f64) -> f64 {
        2.0 * PI * self.periods as f64 / duration
    }

    /// In-period phase s = t/δT − ⌊t/δT⌋, computed from tM/T.
    pub fn phase(&self, t: f64, duration: f64) -> f64 {
        wrap(t * self.periods as f64 / duration)
    }

    pub fn value(&self, t: f64, duration: f64) -> C64 {
        self.kind.at_phase(self.phase(t, duration))
    }

    pub fn derivative(&self, t: f64, duration: f64) -> C64 {
        self.kind.slope_at_phase(self.phase(t, duration)) * (self.periods as f64 / duration)
    }

    /// Every non-smooth time in (0, T), period boundaries included.
    pub fn breakpoints(&self, duration: f64) -> Vec<f64> {
        let m = self.periods;
        let dt = self.period(duration);
        let inner = self.kind.phase_breaks();
        let mut out = Vec::new();
        for p in 0..m {
            if p > 0 {
                out.push(p as f64 * dt);
            }
            out.extend(inner.iter().map(|s| (p as f64 + s) * dt));
        }
        out
    }
}

pub fn profile_double_pump(t: f64, period: f64) -> C64 {
    ProfileKind::DoublePump.at_phase(wrap(t / period))
}

pub fn profile_semi_rotation(t: f64, period: f64) -> C64 {
    ProfileKind::SemiRotation.at_phase(wrap(t / period))
}

pub fn profile_two_point(t: f64, period: f64) -> C64 {
    ProfileKind::TwoPoint.at_phase(wrap(t / period))
}

/// Outcome of [`check_profile`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileReport {
    pub profile: String,
    pub mean: C64,
    pub mean_square: C64,
    pub symmetry_error: f64,
    pub passed: bool,
    pub failures: Vec<String>,
}

pub const PROFILE_AVG_TOL: f64 = 1e-10;
pub const PROFILE_SYM_TOL: f64 = 1e-12;

/// Verifies avg f = 1, avg f² = 0 and f(s) = f(1 − s) over one period.
pub fn check_profile(kind: &ProfileKind) -> ProfileReport {
    let breaks = kind.phase_breaks();
    let tol = 0.1 * PROFILE_AVG_TOL;
    let mean = quad::integrate(|s| kind.at_phase(s), 0.0, 1.0, &breaks, tol);
    let mean_square = quad::integrate(|s| kind.at_phase(s).powi(2), 0.0, 1.0, &breaks, tol);
    let symmetry_error = match kind {
        ProfileKind::Custom { samples } => {
            let n = samples.len();
            (0..n)
                .map(|j| (samples[j] - samples[(n - j) % n]).norm())
                .fold(0.0, f64::max)
        }
        _ => (0..=1000)
            .map(|j| {
                let s = j as f64 / 1000.0;
                (kind.at_phase(s) - kind.at_phase(wrap(1.0 - s))).norm()
            })
            .fold(0.0, f64::max),
    };
    let mut failures = Vec::new();
    if (mean - 1.0).norm() > PROFILE_AVG_TOL {
        failures.push(format!("avg f = {mean}, expected 1"));
    }
    if mean_square.norm() > PROFILE_AVG_TOL {
        failures.push(format!("avg f^2 = {mean_square}, expected 0"));
    }
    if symmetry_error > PROFILE_SYM_TOL {
        failures.push(format!("f(s) - f(1-s) reaches {symmetry_error:.3e}"));
    }
    ProfileReport {
        profile: kind.name(),
        mean,
        mean_square,
        symmetry_error,
        passed: failures.is_empty(),
        failures,
    }
}

/// α̃(t) = α(t) f(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulatedPulse {
    pub envelope: Envelope,
    pub profile: ModulationProfile,
}

impl ModulatedPulse {
    /// Builds without checking the profile constraints.
    pub fn new(envelope: impl Into<Envelope>, profile: ModulationProfile) -> Self {
        Self {
            envelope: envelope.into(),
            profile,
        }
    }

    pub fn duration(&self) -> f64 {
        self.envelope.duration()
    }

    pub fn value(&self, t: f64) -> C64 {
        self.envelope.value(t) * self.profile.value(t, self.duration())
    }

    pub fn derivative(&self, t: f64) -> C64 {
        let d = self.duration();
        self.envelope.derivative(t) * self.profile.value(t, d) + self.envelope.value(t) * self.profile.derivative(t, d)
    }

    /// Per-period averages of α̃ and α̃² over period `j`.
    pub fn period_average(&self, j: u64) -> (C64, C64) {
        let dt = self.profile.period(self.duration());
        let a = j as f64 * dt;
        let breaks: Vec<f64> = self.profile.kind.phase_breaks().iter().map(|s| a + s * dt).collect();
        let m1 = quad::integrate(|t| self.value(t), a, a + dt, &breaks, 1e-13) / dt;
        let m2 = quad::integrate(|t| self.value(t).powi(2), a, a + dt, &breaks, 1e-13) / dt;
        (m1, m2)
    }
}

/// α̃ = α f, rejecting profiles that violate the coarse-graining constraints.
pub fn modulate(envelope: impl Into<Envelope>, profile: ModulationProfile) -> Result<ModulatedPulse> {
    let report = check_profile(&profile.kind);
    if !report.passed {
        return Err(Error::Contract(format!(
            "profile {} rejected: {}",
            report.profile,
            report.failures.join("; ")
        )));
    }
    Ok(ModulatedPulse::new(envelope, profile))
}

/// Error of the first Magnus term against the time-ordered exponential,
/// for each period of a ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MagnusFit {
    pub periods: Vec<f64>,
    pub errors: Vec<f64>,
    /// Log-log slope; `None` when every error sits at the rounding floor.
    pub slope: Option<f64>,
}

/// Family H(δT, t) on t ∈ [0, δT].
pub type HamiltonianFamily<'a> = dyn Fn(f64, f64) -> Operator + Sync + 'a;

const MAGNUS_FLOOR: f64 = 1e-13;

/// ‖T exp(−i∫H) − exp(−i∫H)‖_max over one period, each smooth piece
/// (split at `phase_breaks`) resolved with `substeps` CF4 steps.
pub fn magnus_error(family: &HamiltonianFamily, period: f64, phase_breaks: &[f64], substeps: usize) -> Result<f64> {
    let mut edges = vec![0.0];
    edges.extend(phase_breaks.iter().map(|s| s * period));
    edges.push(period);
    let h = |t: f64| family(period, t);
    let dim = h(0.0).nrows();
    let mut u = crate::fock::identity(dim);
    let mut avg = crate::fock::zeros(dim);
    for w in edges.windows(2) {
        u = propagate_fixed(&h, w[0], w[1], substeps, Scheme::Magnus4)?.dot(&u);
        // same two Gauss nodes as the CF4 steps, so quadrature error cancels
        // in the difference and only the higher Magnus terms remain
        let dt = (w[1] - w[0]) / substeps as f64;
        let c = 3f64.sqrt() / 6.0;
        for k in 0..substeps {
            let a = w[0] + k as f64 * dt;
            avg.scaled_add(C64::from(0.5 * dt), &h(a + (0.5 - c) * dt));
            avg.scaled_add(C64::from(0.5 * dt), &h(a + (0.5 + c) * dt));
        }
    }
    let plain = matrix_exp(&avg.mapv(|z| -I * z))?;
    Ok(max_abs(&(u - plain)))
}

/// Error ladder and slope without any symmetry check.
pub fn magnus_ladder(
    family: &HamiltonianFamily,
    periods: &[f64],
    phase_breaks: &[f64],
    substeps: usize,
) -> Result<MagnusFit> {
    let errors = periods
        .par_iter()
        .map(|&p| magnus_error(family, p, phase_breaks, substeps))
        .collect::<Result<Vec<_>>>()?;
    let usable: Vec<(f64, f64)> = periods
        .iter()
        .zip(&errors)
        .filter(|(_, &e)| e > MAGNUS_FLOOR)
        .map(|(&p, &e)| (p.ln(), e.ln()))
        .collect();
    let slope = if usable.len() >= 2 {
        Some(linear_fit(&usable).1)
    } else {
        None
    };
    Ok(MagnusFit {
        periods: periods.to_vec(),
        errors,
        slope,
    })
}

/// [`magnus_ladder`] for families that must satisfy H(t) = H(δT − t).
pub fn magnus_symmetry_order(
    family: &HamiltonianFamily,
    periods: &[f64],
    phase_breaks: &[f64],
    substeps: usize,
) -> Result<MagnusFit> {
    for &p in periods {
        let scale = max_abs(&family(p, 0.25 * p)).max(1.0);
        for j in 0..=64 {
            // stay off the break points themselves
            let t = p * (j as f64 + 0.37) / 65.0;
            let d = max_abs(&(family(p, t) - family(p, p - t)));
            if d > 1e-10 * scale {
                return Err(Error::Contract(format!(
                    "H(t) != H(dT - t) at t = {t:.3e} (difference {d:.3e})"
                )));
            }
        }
    }
    magnus_ladder(family, periods, phase_breaks, substeps)
}

/// Ordinary least squares y = a + b x; returns (a, b).
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Least squares y = c + a x1 + b x2; returns (c, a, b).
pub fn plane_fit(points: &[(f64, f64, f64)]) -> Result<(f64, f64, f64)> {
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for &(x1, x2, y) in points {
        let row = [1.0, x1, x2];
        for i in 0..3 {
            aty[i] += row[i] * y;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let m = nalgebra::Matrix3::from_fn(|i, j| ata[i][j]);
    let v = nalgebra::Vector3::from_fn(|i, _| aty[i]);
    let sol = m
        .lu()
        .solve(&v)
        .ok_or_else(|| Error::Contract("degenerate fit grid".into()))?;
    Ok((sol[0], sol[1], sol[2]))
}

/// Settings for the constant-α Fock-1 Trotter scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrotterScanSpec {
    pub m_values: Vec<u64>,
    pub chi_t_values: Vec<f64>,
    pub profile: ProfileKind,
    pub dim: usize,
    pub steps_per_half: usize,
    /// Points with ε_tt above this are left out of the fit; above a few
    /// percent ε·M⁴(χT)⁶ has not yet settled to its large-M value.
    pub eps_cutoff: f64,
}

impl Default for TrotterScanSpec {
    fn default() -> Self {
        Self {
            m_values: vec![20, 40, 80, 160],
            chi_t_values: vec![0.1, 0.14, 0.2],
            profile: ProfileKind::SemiRotation,
            dim: 24,
            steps_per_half: 48,
            eps_cutoff: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrotterPoint {
    pub m: u64,
    pub chi_t: f64,
    pub eps_tt: f64,
    /// ε_tt · M⁴ (χT)⁶.
    pub c2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrotterScan {
    pub points: Vec<TrotterPoint>,
    pub fitted_points: usize,
    pub slope_m: f64,
    pub slope_chi_t: f64,
    /// exp(intercept) of the free fit.
    pub fit_prefactor: f64,
    /// c₂ at the smallest χT and largest M.
    pub c2: f64,
}

impl TrotterScan {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("M,chi_T,eps_tt,c2\n");
        for p in &self.points {
            s.push_str(&format!("{},{:.16e},{:.16e},{:.16e}\n", p.m, p.chi_t, p.eps_tt, p.c2));
        }
        s
    }
}

/// U(T) for the constant-α protocol under H'_dr[α f(t)], built from one
/// period propagator raised to the M-th power.
pub fn modulated_unitary(
    config: &BlockadeConfig,
    alpha: f64,
    duration: f64,
    profile: &ModulationProfile,
    space: FockSpace,
    steps_per_half: usize,
) -> Result<Operator> {
    let u = period_propagator(
        |t| h_dr_prime(C64::from(alpha) * profile.value(t, duration), config, space),
        profile.period(duration),
        &profile.kind.phase_breaks(),
        steps_per_half,
    )?;
    Ok(matrix_power(&u, profile.periods))
}

/// One-period propagator with each smooth piece integrated separately.
pub fn period_propagator<F>(h: F, period: f64, phase_breaks: &[f64], steps: usize) -> Result<Operator>
where
    F: Fn(f64) -> Result<Operator>,
{
    let mut edges = vec![0.0];
    edges.extend(phase_breaks.iter().map(|s| s * period));
    edges.push(period);
    // the samplers used here fail only on a dimension mismatch, which is
    // independent of t, so validating once at t = 0 covers the whole period
    let dim = h(0.0)?.nrows();
    let g = |t: f64| h(t).expect("sampler validated at t = 0");
    let mut u = crate::fock::identity(dim);
    for w in edges.windows(2) {
        u = propagate_fixed(&g, w[0], w[1], steps, Scheme::Magnus4)?.dot(&u);
    }
    Ok(u)
}

/// ε_tt = 1 − |⟨1|U(T)|0⟩|² for α = π/(2|χ|T).
pub fn fock1_trotter_error(
    config: &BlockadeConfig,
    chi_t: f64,
    profile: &ModulationProfile,
    dim: usize,
    steps_per_half: usize,
) -> Result<f64> {
    let duration = chi_t / config.chi.abs();
    let alpha = PI / (2.0 * chi_t);
    let u = modulated_unitary(config, alpha, duration, profile, FockSpace::new(dim)?, steps_per_half)?;
    Ok(1.0 - u[[1, 0]].norm_sqr())
}

/// ε_tt over an (M, χT) grid and a log-log fit ε = c M^a (χT)^b.
pub fn trotter_error_scan(spec: &TrotterScanSpec, config: &BlockadeConfig) -> Result<TrotterScan> {
    if config.r != 1 {
        return Err(Error::Contract("the Fock-1 scan needs r = 1".into()));
    }
    if config.kappa() != 0.0 {
        return Err(Error::Contract("the Trotter scan is lossless (kappa = 0)".into()));
    }
    let distinct = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.total_cmp(b));
        v.dedup();
        v.len()
    };
    let mut ms: Vec<f64> = spec.m_values.iter().map(|&m| m as f64).collect();
    let mut ts = spec.chi_t_values.clone();
    if distinct(&mut ms) < 3 || distinct(&mut ts) < 3 {
        return Err(Error::Contract(
            "need at least 3 distinct values of M and of chi*T".into(),
        ));
    }
    let grid: Vec<(u64, f64)> = spec
        .chi_t_values
        .iter()
        .flat_map(|&ct| spec.m_values.iter().map(move |&m| (m, ct)))
        .collect();
    let points = grid
        .par_iter()
        .map(|&(m, ct)| {
            let profile = ModulationProfile::new(spec.profile.clone(), m)?;
            let eps = fock1_trotter_error(config, ct, &profile, spec.dim, spec.steps_per_half)?;
            Ok(TrotterPoint {
                m,
                chi_t: ct,
                eps_tt: eps,
                c2: eps * (m as f64).powi(4) * ct.powi(6),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| p.eps_tt > 0.0 && p.eps_tt < spec.eps_cutoff)
        .map(|p| ((p.m as f64).ln(), p.chi_t.ln(), p.eps_tt.ln()))
        .collect();
    if fit.len() < 4 {
        return Err(Error::Contract(format!(
            "only {} grid points below the cutoff",
            fit.len()
        )));
    }
    let (c, a, b) = plane_fit(&fit)?;
    let corner = points
        .iter()
        .filter(|p| p.chi_t == ts[0])
        .max_by_key(|p| p.m)
        .expect("non-empty grid");
    Ok(TrotterScan {
        fitted_points: fit.len(),
        slope_m: a,
        slope_chi_t: b,
        fit_prefactor: c.exp(),
        c2: corner.c2,
        points,
    })
}
