// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

//! Time-ordered propagation (closed and open system), fidelities, leakage.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{annihilation, dagger, identity, max_abs, FockSpace, Operator, C64, I};
use crate::linalg::{eigvalsh, kron, matrix_exp, matrix_power};

/// Exponential integrator for dU/dt = −iH(t)U.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// exp(−iH(t + Δt/2)Δt), second order.
    #[default]
    Midpoint,
    /// Two-exponential commutator-free Magnus rule on Gauss nodes, fourth order.
    Magnus4,
}

const SQRT3: f64 = 1.732_050_807_568_877_2;
const CF4_A1: f64 = (3.0 - 2.0 * SQRT3) / 12.0;
const CF4_A2: f64 = (3.0 + 2.0 * SQRT3) / 12.0;

/// Gauss nodes (as fractions of the step) and weights of the rule.
fn cf4_nodes() -> (f64, f64) {
    (0.5 - SQRT3 / 6.0, 0.5 + SQRT3 / 6.0)
}

/// Generator exponentials for one step of the chosen scheme, in the order
/// they are applied. `g` maps a time to the generator A(t) of dX/dt = A X.
fn step_generators<G>(g: &G, t: f64, dt: f64, scheme: Scheme) -> Vec<Operator>
where
    G: Fn(f64) -> Operator + ?Sized,
{
    match scheme {
        Scheme::Midpoint => vec![g(t + 0.5 * dt).mapv(|z| z * dt)],
        Scheme::Magnus4 => {
            let (c1, c2) = cf4_nodes();
            let a1 = g(t + c1 * dt);
            let a2 = g(t + c2 * dt);
            let first = (&a1 * C64::from(CF4_A2 * dt)) + (&a2 * C64::from(CF4_A1 * dt));
            let second = (&a1 * C64::from(CF4_A1 * dt)) + (&a2 * C64::from(CF4_A2 * dt));
            vec![first, second]
        }
    }
}

/// Propagator of one step [t, t + dt].
pub fn step_propagator<H>(h: &H, t: f64, dt: f64, scheme: Scheme) -> Result<Operator>
where
    H: Fn(f64) -> Operator + ?Sized,
{
    let g = |s: f64| h(s).mapv(|z| -I * z);
    let mut u: Option<Operator> = None;
    for a in step_generators(&g, t, dt, scheme) {
        let e = matrix_exp(&a)?;
        u = Some(match u {
            None => e,
            Some(prev) => e.dot(&prev),
        });
    }
    Ok(u.expect("at least one exponential per step"))
}

/// Fixed-step product over [a, b].
pub fn propagate_fixed<H>(h: &H, a: f64, b: f64, steps: usize, scheme: Scheme) -> Result<Operator>
where
    H: Fn(f64) -> Operator + ?Sized,
{
    let steps = steps.max(1);
    let dt = (b - a) / steps as f64;
    let dim = h(a).nrows();
    let mut u = identity(dim);
    for k in 0..steps {
        u = step_propagator(h, a + k as f64 * dt, dt, scheme)?.dot(&u);
    }
    Ok(u)
}

/// Step-doubling controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PropagationOptions {
    pub scheme: Scheme,
    pub tolerance: f64,
    pub max_steps: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Midpoint,
            tolerance: 1e-9,
            max_steps: 1 << 17,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UnitaryPropagation {
    pub unitary: Operator,
    pub steps: usize,
    /// ‖U_{2s} − U_s‖_max at the accepted resolution.
    pub convergence_estimate: f64,
}

/// U(T) with step doubling from `steps` until two resolutions agree to the
/// default tolerance.
pub fn propagate_unitary<H>(h: &H, duration: f64, steps: usize) -> Result<UnitaryPropagation>
where
    H: Fn(f64) -> Operator + ?Sized,
{
    propagate_unitary_with(h, duration, steps, &PropagationOptions::default())
}

pub fn propagate_unitary_with<H>(
    h: &H,
    duration: f64,
    steps: usize,
    opts: &PropagationOptions,
) -> Result<UnitaryPropagation>
where
    H: Fn(f64) -> Operator + ?Sized,
{
    if steps == 0 {
        return Err(Error::Contract("steps must be at least 1".into()));
    }
    let mut s = steps;
    let mut coarse = propagate_fixed(h, 0.0, duration, s, opts.scheme)?;
    loop {
        let fine = propagate_fixed(h, 0.0, duration, 2 * s, opts.scheme)?;
        let diff = max_abs(&(&fine - &coarse));
        if diff <= opts.tolerance {
            return Ok(UnitaryPropagation {
                unitary: fine,
                steps: 2 * s,
                convergence_estimate: diff,
            });
        }
        if 4 * s > opts.max_steps {
            return Err(Error::Convergence {
                steps: 2 * s,
                residual: diff,
                best: Box::new(fine),
            });
        }
        coarse = fine;
        s *= 2;
    }
}

/// U(t_k) at every macro step t_k = kT/steps, starting with U(0) = I.
pub fn unitary_trajectory<H>(h: &H, duration: f64, steps: usize, scheme: Scheme) -> Result<Vec<(f64, Operator)>>
where
    H: Fn(f64) -> Operator + ?Sized,
{
    let steps = steps.max(1);
    let dt = duration / steps as f64;
    let mut u = identity(h(0.0).nrows());
    let mut out = Vec::with_capacity(steps + 1);
    out.push((0.0, u.clone()));
    for k in 0..steps {
        u = step_propagator(h, k as f64 * dt, dt, scheme)?.dot(&u);
        out.push(((k + 1) as f64 * dt, u.clone()));
    }
    Ok(out)
}

/// |Tr(Π U_tar† U Π)|² / N², comparing the leading N×N blocks.
pub fn gate_fidelity(u: &Operator, u_tar: &Operator, n: usize) -> f64 {
    let mut z = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            z += u_tar[[i, j]].conj() * u[[i, j]];
        }
    }
    (z.norm_sqr() / (n * n) as f64).min(1.0)
}

/// |⟨target|ψ⟩|² over the leading entries of ψ.
pub fn state_fidelity(psi: &Array1<C64>, target: &Array1<C64>) -> f64 {
    let z: C64 = target.iter().zip(psi.iter()).map(|(t, p)| t.conj() * p).sum();
    z.norm_sqr().min(1.0)
}

/// Out-of-blockade population summed over blockade inputs,
/// Tr[U†(I−Π)UΠ].
pub fn unitary_leak_density(u: &Operator, r: usize) -> f64 {
    let d = u.nrows();
    let mut s = 0.0;
    for j in 0..=r.min(d - 1) {
        for i in r + 1..d {
            s += u[[i, j]].norm_sqr();
        }
    }
    s
}

pub fn state_leak_density(psi: &Array1<C64>, r: usize) -> f64 {
    psi.iter().skip(r + 1).map(|z| z.norm_sqr()).sum()
}

fn trapezoid(samples: &[(f64, f64)]) -> f64 {
    samples
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}

/// g_u = (1/((r+1)T)) ∫ Tr[U†(I−Π)UΠ] dt, trapezoid rule.
pub fn leakage_unitary(trajectory: &[(f64, Operator)], r: usize) -> f64 {
    let pts: Vec<(f64, f64)> = trajectory
        .iter()
        .map(|(t, u)| (*t, unitary_leak_density(u, r)))
        .collect();
    let span = pts.last().map(|p| p.0).unwrap_or(0.0) - pts.first().map(|p| p.0).unwrap_or(0.0);
    if span <= 0.0 {
        return 0.0;
    }
    trapezoid(&pts) / ((r + 1) as f64 * span)
}

/// g_st = (1/T) ∫ ⟨ψ|(I−Π)|ψ⟩ dt, trapezoid rule.
pub fn leakage_state(trajectory: &[(f64, Array1<C64>)], r: usize) -> f64 {
    let pts: Vec<(f64, f64)> = trajectory.iter().map(|(t, p)| (*t, state_leak_density(p, r))).collect();
    let span = pts.last().map(|p| p.0).unwrap_or(0.0) - pts.first().map(|p| p.0).unwrap_or(0.0);
    if span <= 0.0 {
        return 0.0;
    }
    trapezoid(&pts) / span
}

/// Row-major vectorization: vec(ρ)[iD + j] = ρ_ij, so vec(AρB) = (A ⊗ Bᵀ) vec(ρ).
pub fn vectorize(rho: &Operator) -> Array1<C64> {
    Array1::from_iter(rho.iter().copied())
}

pub fn unvectorize(v: &Array1<C64>, dim: usize) -> Operator {
    Array2::from_shape_vec((dim, dim), v.to_vec()).expect("length dim²")
}

/// L = −i(H ⊗ I − I ⊗ Hᵀ) + κ(c ⊗ c* − ½ c†c ⊗ I − ½ I ⊗ (c†c)ᵀ).
pub fn liouvillian(h: &Operator, kappa: f64, jump: &Operator) -> Operator {
    let d = h.nrows();
    let id = identity(d);
    let mut l = (kron(h, &id) - kron(&id, &h.t().to_owned())).mapv(|z| -I * z);
    if kappa != 0.0 {
        let cdc = dagger(jump).dot(jump);
        let diss = kron(jump, &jump.mapv(|z| z.conj()))
            - kron(&cdc, &id).mapv(|z| 0.5 * z)
            - kron(&id, &cdc.t().to_owned()).mapv(|z| 0.5 * z);
        l.scaled_add(C64::from(kappa), &diss);
    }
    l
}

/// Largest dimension handled with the superoperator exponential.
pub const SUPEROPERATOR_MAX_DIM: usize = 16;

/// Superoperator of dρ/dt = −i[H,ρ] + κD[a]ρ over [a, b].
pub fn lindblad_map<H>(h: &H, kappa: f64, a: f64, b: f64, steps: usize, scheme: Scheme) -> Result<Operator>
where
    H: Fn(f64) -> Operator + ?Sized,
{
    let dim = h(a).nrows();
    let jump = annihilation(FockSpace::new(dim)?);
    let g = |t: f64| liouvillian(&h(t), kappa, &jump);
    let steps = steps.max(1);
    let dt = (b - a) / steps as f64;
    let mut s = identity(dim * dim);
    for k in 0..steps {
        for gen in step_generators(&g, a + k as f64 * dt, dt, scheme) {
            s = matrix_exp(&gen)?.dot(&s);
        }
    }
    Ok(s)
}

/// Exact amplitude-damping channel e^{τκD[a]} as Kraus weights:
/// E_k|n⟩ = w[k][n] |n−k⟩.
pub struct DampingChannel {
    weights: Vec<Vec<f64>>,
}

impl DampingChannel {
    pub fn new(dim: usize, kappa: f64, tau: f64) -> Self {
        let p = (-kappa * tau).exp();
        let q = -(-kappa * tau).exp_m1();
        let mut weights = vec![vec![0.0; dim]; dim];
        for (k, row) in weights.iter_mut().enumerate() {
            for (n, w) in row.iter_mut().enumerate().skip(k) {
                let binom = ln_binom(n, k);
                let lw =
                    0.5 * binom + 0.5 * (n - k) as f64 * p.ln() + if k == 0 { 0.0 } else { 0.5 * k as f64 * q.ln() };
                *w = lw.exp();
            }
        }
        Self { weights }
    }

    pub fn apply(&self, rho: &Operator) -> Operator {
        let d = rho.nrows();
        let mut out = Array2::zeros((d, d));
        for (k, w) in self.weights.iter().enumerate() {
            for m in 0..d - k {
                for mp in 0..d - k {
                    let v = rho[[m + k, mp + k]];
                    if v != C64::new(0.0, 0.0) {
                        out[[m, mp]] += v * (w[m + k] * w[mp + k]);
                    }
                }
            }
        }
        out
    }
}

fn ln_binom(n: usize, k: usize) -> f64 {
    (1..=k).map(|j| ((n + 1 - j) as f64 / j as f64).ln()).sum()
}

/// Strang splitting: half damping, unitary step, half damping.
pub fn lindblad_split<H>(
    rho0: &Operator,
    h: &H,
    kappa: f64,
    a: f64,
    b: f64,
    steps: usize,
    scheme: Scheme,
) -> Result<Operator>
where
    H: Fn(f64) -> Operator + ?Sized,
{
    let steps = steps.max(1);
    let dt = (b - a) / steps as f64;
    let half = DampingChannel::new(rho0.nrows(), kappa, 0.5 * dt);
    let mut rho = rho0.clone();
    for k in 0..steps {
        let u = step_propagator(h, a + k as f64 * dt, dt, scheme)?;
        rho = half.apply(&rho);
        rho = u.dot(&rho).dot(&dagger(&u));
        rho = half.apply(&rho);
    }
    Ok(rho)
}

/// Checks Hermiticity, unit trace and positivity of a density operator.
pub fn validate_density(rho: &Operator, tol: f64) -> Result<()> {
    if !rho.is_square() {
        return Err(Error::Contract("density operator must be square".into()));
    }
    let herm = max_abs(&(rho - &dagger(rho)));
    if herm > tol {
        return Err(Error::Contract(format!("density not Hermitian ({herm:.2e})")));
    }
    let tr = crate::fock::trace(rho);
    if (tr - 1.0).norm() > tol {
        return Err(Error::Contract(format!("density trace {tr}")));
    }
    let min = eigvalsh(rho)[0];
    if min < -tol {
        return Err(Error::Contract(format!("density eigenvalue {min:.3e}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LindbladPropagation {
    pub rho: Operator,
    pub steps: usize,
    pub convergence_estimate: f64,
}

/// ρ(T) under the photon-loss master equation, with step doubling.
/// Superoperator exponentials for dim ≤ 16, Strang splitting above.
pub fn lindblad_propagate<H>(
    rho0: &Operator,
    h: &H,
    kappa: f64,
    duration: f64,
    steps: usize,
) -> Result<LindbladPropagation>
where
    H: Fn(f64) -> Operator + ?Sized,
{
    lindblad_propagate_with(rho0, h, kappa, duration, steps, &PropagationOptions::default())
}

pub fn lindblad_propagate_with<H>(
    rho0: &Operator,
    h: &H,
    kappa: f64,
    duration: f64,
    steps: usize,
    opts: &PropagationOptions,
) -> Result<LindbladPropagation>
where
    H: Fn(f64) -> Operator + ?Sized,
{
    validate_density(rho0, 1e-9)?;
    if !(kappa >= 0.0) {
        return Err(Error::Contract("kappa must be >= 0".into()));
    }
    if steps == 0 {
        return Err(Error::Contract("steps must be at least 1".into()));
    }
    let dim = rho0.nrows();
    let run = |s: usize| -> Result<Operator> {
        if dim <= SUPEROPERATOR_MAX_DIM {
            let map = lindblad_map(h, kappa, 0.0, duration, s, opts.scheme)?;
            Ok(unvectorize(&map.dot(&vectorize(rho0)), dim))
        } else {
            lindblad_split(rho0, h, kappa, 0.0, duration, s, opts.scheme)
        }
    };
    let mut s = steps;
    let mut coarse = run(s)?;
    loop {
        let fine = run(2 * s)?;
        let diff = max_abs(&(&fine - &coarse));
        if diff <= opts.tolerance {
            return Ok(LindbladPropagation {
                rho: fine,
                steps: 2 * s,
                convergence_estimate: diff,
            });
        }
        if 4 * s > opts.max_steps {
            return Err(Error::Convergence {
                steps: 2 * s,
                residual: diff,
                best: Box::new(fine),
            });
        }
        coarse = fine;
        s *= 2;
    }
}

/// ρ after `periods` repetitions of a δT-periodic Hamiltonian whose smooth
/// pieces are separated by `phase_breaks` (fractions of δT).
#[allow(clippy::too_many_arguments)]
pub fn lindblad_periodic<H>(
    rho0: &Operator,
    h: &H,
    kappa: f64,
    period: f64,
    phase_breaks: &[f64],
    steps_per_segment: usize,
    periods: u64,
    scheme: Scheme,
) -> Result<Operator>
where
    H: Fn(f64) -> Operator + ?Sized,
{
    let dim = rho0.nrows();
    let mut edges = vec![0.0];
    edges.extend(phase_breaks.iter().map(|s| s * period));
    edges.push(period);
    if dim <= SUPEROPERATOR_MAX_DIM {
        let mut map = identity(dim * dim);
        for w in edges.windows(2) {
            map = lindblad_map(h, kappa, w[0], w[1], steps_per_segment, scheme)?.dot(&map);
        }
        let total = matrix_power(&map, periods);
        return Ok(unvectorize(&total.dot(&vectorize(rho0)), dim));
    }
    // one period of step unitaries, reused for every period
    let mut unitaries = Vec::new();
    let mut halves = Vec::new();
    for w in edges.windows(2) {
        let dt = (w[1] - w[0]) / steps_per_segment as f64;
        halves.push(DampingChannel::new(dim, kappa, 0.5 * dt));
        for k in 0..steps_per_segment {
            unitaries.push((halves.len() - 1, step_propagator(h, w[0] + k as f64 * dt, dt, scheme)?));
        }
    }
    let dags: Vec<Operator> = unitaries.iter().map(|(_, u)| dagger(u)).collect();
    let mut rho = rho0.clone();
    for _ in 0..periods {
        for ((seg, u), ud) in unitaries.iter().zip(&dags) {
            rho = halves[*seg].apply(&rho);
            rho = u.dot(&rho).dot(ud);
            rho = halves[*seg].apply(&rho);
        }
    }
    Ok(rho)
}

/// What a propagation ended in.
#[derive(Debug, Clone)]
pub enum FinalState {
    Unitary(Operator),
    State(Array1<C64>),
    Density(Operator),
}

/// Summary of one simulation.
#[derive(Debug, Clone)]
pub struct PropagationResult {
    pub final_state: FinalState,
    pub gate_fidelity: Option<f64>,
    pub state_fidelity: Option<f64>,
    pub leakage_g: Option<f64>,
    pub step_count: usize,
    pub convergence_estimate: f64,
}

/// Rows of t, populations of ψ(t) = U(t)ψ₀ per level, and out-of-blockade population.
pub fn trajectory_csv(trajectory: &[(f64, Operator)], psi0: &Array1<C64>, r: usize) -> String {
    let dim = psi0.len();
    let mut s = String::from("t");
    for n in 0..dim {
        let _ = write!(s, ",p{n}");
    }
    s.push_str(",leakage\n");
    for (t, u) in trajectory {
        let psi = u.dot(psi0);
        let _ = write!(s, "{t:.16e}");
        for z in psi.iter() {
            let _ = write!(s, ",{:.16e}", z.norm_sqr());
        }
        let _ = writeln!(s, ",{:.16e}", state_leak_density(&psi, r));
    }
    s
}

/// Pure state |n⟩ in a space of dimension `dim`.
pub fn fock_state(dim: usize, n: usize) -> Array1<C64> {
    let mut v = Array1::zeros(dim);
    v[n] = C64::new(1.0, 0.0);
    v
}

pub fn fock_density(dim: usize, n: usize) -> Operator {
    let mut rho = Array2::zeros((dim, dim));
    rho[[n, n]] = C64::new(1.0, 0.0);
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{diag_real, unitarity_defect, zeros};
    use crate::frames::{h_dr, h_dr_prime, BlockadeConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sigma_x() -> Operator {
        let mut s = zeros(2);
        s[[0, 1]] = C64::from(1.0);
        s[[1, 0]] = C64::from(1.0);
        s
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> Operator {
        let g = Array2::from_shape_fn((n, n), |_| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        (&g + &dagger(&g)).mapv(|z| z * 0.5)
    }

    /// Classical RK4 on dU/dt = −iH(t)U.
    fn rk4<H: Fn(f64) -> Operator>(h: &H, duration: f64, steps: usize) -> Operator {
        let dt = duration / steps as f64;
        let mut u = identity(h(0.0).nrows());
        let f = |t: f64, u: &Operator| h(t).dot(u).mapv(|z| -I * z);
        for k in 0..steps {
            let t = k as f64 * dt;
            let k1 = f(t, &u);
            let k2 = f(t + dt / 2.0, &(&u + &k1.mapv(|z| z * (dt / 2.0))));
            let k3 = f(t + dt / 2.0, &(&u + &k2.mapv(|z| z * (dt / 2.0))));
            let k4 = f(t + dt, &(&u + &k3.mapv(|z| z * dt)));
            u = &u + &((&k1 + &k2.mapv(|z| z * 2.0) + &k3.mapv(|z| z * 2.0) + &k4).mapv(|z| z * (dt / 6.0)));
        }
        u
    }

    fn smooth_family(seed: u64) -> impl Fn(f64) -> Operator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h0 = random_hermitian(4, &mut rng);
        let h1 = random_hermitian(4, &mut rng);
        let h2 = random_hermitian(4, &mut rng);
        move |t: f64| &h0 + &h1.mapv(|z| z * (3.0 * t).sin()) + &h2.mapv(|z| z * (t * t))
    }

    #[test]
    fn zero_hamiltonian() {
        let r = propagate_unitary(&|_t: f64| zeros(3), 1.0, 4).unwrap();
        assert!(max_abs(&(r.unitary - identity(3))) < 1e-15);
    }

    #[test]
    fn constant_drive_flips_fock_state() {
        let alpha = 2.0;
        let h = sigma_x().mapv(|z| -alpha * z);
        let t = PI / (2.0 * alpha);
        let u = propagate_unitary(&|_t: f64| h.clone(), t, 2).unwrap().unitary;
        assert!((u[[1, 0]] - I).norm() < 1e-12);
    }

    #[test]
    fn midpoint_matches_rk4_oracle() {
        let h = smooth_family(1);
        let u = propagate_unitary(&h, 2.0, 32).unwrap().unitary;
        let oracle = rk4(&h, 2.0, 20_000);
        assert!(max_abs(&(u - oracle)) < 1e-8);
    }

    #[test]
    fn midpoint_is_second_order() {
        let h = smooth_family(2);
        let exact = propagate_fixed(&h, 0.0, 1.5, 400, Scheme::Magnus4).unwrap();
        let e1 = max_abs(&(propagate_fixed(&h, 0.0, 1.5, 20, Scheme::Midpoint).unwrap() - &exact));
        let e2 = max_abs(&(propagate_fixed(&h, 0.0, 1.5, 40, Scheme::Midpoint).unwrap() - &exact));
        assert!(e1 / e2 >= 3.5, "ratio {}", e1 / e2);
    }

    #[test]
    fn magnus4_is_fourth_order() {
        let h = smooth_family(3);
        let exact = propagate_fixed(&h, 0.0, 1.5, 800, Scheme::Magnus4).unwrap();
        let e1 = max_abs(&(propagate_fixed(&h, 0.0, 1.5, 10, Scheme::Magnus4).unwrap() - &exact));
        let e2 = max_abs(&(propagate_fixed(&h, 0.0, 1.5, 20, Scheme::Magnus4).unwrap() - &exact));
        assert!(e1 / e2 >= 12.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn convergence_error_carries_estimate() {
        let h = smooth_family(4);
        let opts = PropagationOptions {
            max_steps: 8,
            ..PropagationOptions::default()
        };
        match propagate_unitary_with(&h, 5.0, 2, &opts) {
            Err(Error::Convergence { best, .. }) => assert!(unitarity_defect(&best) < 1e-12),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn fidelity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = matrix_exp(&random_hermitian(3, &mut rng).mapv(|z| -I * z)).unwrap();
        assert!((gate_fidelity(&u, &u, 3) - 1.0).abs() < 1e-14);
        let ph = u.mapv(|z| z * C64::from_polar(1.0, 0.77));
        assert!((gate_fidelity(&ph, &u, 3) - 1.0).abs() < 1e-14);
        let mut perm = zeros(3);
        perm[[1, 0]] = C64::from(1.0);
        perm[[2, 1]] = C64::from(1.0);
        perm[[0, 2]] = C64::from(1.0);
        assert_eq!(gate_fidelity(&identity(3), &perm, 3), 0.0);
    }

    #[test]
    fn leakage_zero_under_exact_blockade() {
        let c = BlockadeConfig::new(1.0, 0.0, 2).unwrap();
        let s = FockSpace::new(5).unwrap();
        let h = |t: f64| h_dr(C64::new(3.0 * t.sin(), 1.0), &c, s).unwrap();
        let traj = unitary_trajectory(&h, 0.5, 50, Scheme::Midpoint).unwrap();
        assert!(leakage_unitary(&traj, 2) < 1e-28);
    }

    #[test]
    fn leakage_positive_with_two_photon_term() {
        let c = BlockadeConfig::new(1.0, 0.0, 1).unwrap();
        let s = FockSpace::new(5).unwrap();
        let h = |_t: f64| h_dr_prime(C64::from(1.0), &c, s).unwrap();
        let traj = unitary_trajectory(&h, 0.5, 50, Scheme::Midpoint).unwrap();
        assert!(leakage_unitary(&traj, 1) > 1e-4);
    }

    #[test]
    fn frozen_state_leakage_is_one() {
        let traj: Vec<(f64, Array1<C64>)> = (0..5).map(|k| (k as f64 * 0.1, fock_state(4, 2))).collect();
        assert!((leakage_state(&traj, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pure_decay() {
        let kappa = 0.7;
        for dim in [3, 20] {
            let rho0 = fock_density(dim, 1);
            let r = lindblad_propagate(&rho0, &|_t: f64| zeros(dim), kappa, 1.3, 2).unwrap();
            assert!((r.rho[[1, 1]].re - (-kappa * 1.3f64).exp()).abs() < 1e-12);
            assert!((crate::fock::trace(&r.rho) - 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn closed_system_limit() {
        let h = smooth_family(6);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v = Array1::from_shape_fn(4, |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let v = &v / C64::from(v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
        let rho0 = Array2::from_shape_fn((4, 4), |(i, j)| v[i] * v[j].conj());
        let opts = PropagationOptions {
            scheme: Scheme::Magnus4,
            ..PropagationOptions::default()
        };
        let u = propagate_unitary_with(&h, 1.0, 16, &opts).unwrap().unitary;
        let rho = lindblad_propagate_with(&rho0, &h, 0.0, 1.0, 16, &opts).unwrap().rho;
        assert!(max_abs(&(rho - u.dot(&rho0).dot(&dagger(&u)))) < 1e-9);
    }

    #[test]
    fn splitting_agrees_with_superoperator() {
        let c = BlockadeConfig::new(1.0, 0.0, 1).unwrap();
        let s = FockSpace::new(6).unwrap();
        let h = |t: f64| h_dr_prime(C64::new(0.8 * (2.0 * t).cos(), 0.3), &c, s).unwrap();
        let rho0 = fock_density(6, 0);
        let exact = lindblad_map(&h, 0.4, 0.0, 1.0, 200, Scheme::Magnus4).unwrap();
        let exact = unvectorize(&exact.dot(&vectorize(&rho0)), 6);
        let split = lindblad_split(&rho0, &h, 0.4, 0.0, 1.0, 400, Scheme::Magnus4).unwrap();
        assert!(max_abs(&(exact - &split)) < 1e-5);
        validate_density(&split, 1e-9).unwrap();
    }

    #[test]
    fn periodic_paths_agree() {
        let c = BlockadeConfig::new(1.0, 0.0, 1).unwrap();
        let s = FockSpace::new(5).unwrap();
        let period = 0.05;
        let h = |t: f64| h_dr_prime(C64::from(1.5) * crate::pulse::profile_semi_rotation(t, period), &c, s).unwrap();
        let rho0 = fock_density(5, 0);
        let a = lindblad_periodic(&rho0, &h, 0.2, period, &[0.5], 32, 6, Scheme::Magnus4).unwrap();
        let big = |t: f64| h(t);
        let mut rho = rho0.clone();
        for p in 0..6 {
            let t0 = p as f64 * period;
            rho = lindblad_split(&rho, &big, 0.2, t0, t0 + 0.5 * period, 128, Scheme::Magnus4).unwrap();
            rho = lindblad_split(&rho, &big, 0.2, t0 + 0.5 * period, t0 + period, 128, Scheme::Magnus4).unwrap();
        }
        assert!(max_abs(&(a - rho)) < 1e-6);
    }

    #[test]
    fn two_level_loss_coefficient() {
        // ε/(κT) → 3/8 for |0⟩ → |1⟩ under −χασ_x with D[σ−]
        let alpha = 1.0;
        let t = PI / (2.0 * alpha);
        let kappa = 0.01 / t;
        let h = sigma_x().mapv(|z| -alpha * z);
        let r = lindblad_propagate(&fock_density(2, 0), &|_t: f64| h.clone(), kappa, t, 1).unwrap();
        let eps = 1.0 - r.rho[[1, 1]].re;
        assert!((eps / (kappa * t) / 0.375 - 1.0).abs() < 0.02);
    }

    #[test]
    fn rejects_invalid_density() {
        let bad = diag_real(&[0.7, 0.7]);
        assert!(lindblad_propagate(&bad, &|_t: f64| zeros(2), 0.1, 1.0, 1).is_err());
    }

    #[test]
    fn damping_channel_is_trace_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = Array2::from_shape_fn((7, 7), |_| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let rho = g.dot(&dagger(&g));
        let rho = &rho / crate::fock::trace(&rho);
        let out = DampingChannel::new(7, 1.3, 0.4).apply(&rho);
        validate_density(&out, 1e-12).unwrap();
    }

    #[test]
    fn trajectory_csv_shape() {
        let traj = unitary_trajectory(&|_t: f64| sigma_x(), 1.0, 4, Scheme::Midpoint).unwrap();
        let csv = trajectory_csv(&traj, &fock_state(2, 0), 0);
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.starts_with("t,p0,p1,leakage"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn propagation_invariants(seed in any::<u64>(), kappa in 0.0f64..2.0) {
                let h = smooth_family(seed);
                let u = propagate_unitary(&h, 1.0, 8).unwrap().unitary;
                prop_assert!(unitarity_defect(&u) <= 1e-9);
                let rho = lindblad_propagate(&fock_density(4, 1), &h, kappa, 1.0, 8).unwrap().rho;
                validate_density(&rho, 1e-9).unwrap();
            }
        }
    }
}
