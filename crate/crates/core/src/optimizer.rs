// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

//! Pulse synthesis by gradient ascent on gate or state fidelity.
//!
//! Propagation uses fixed midpoint-exponential steps; the gradient is the
//! exact derivative of that discretization, obtained by a backward sweep
//! that reuses the Fréchet derivatives of every step exponential.

use std::f64::consts::PI;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{creation, dagger, embed, identity, number, unitarity_defect, zeros, FockSpace, Operator, C64, I};
use crate::frames::{h_dr, h_dr_projected, BlockadeConfig};
use crate::linalg::{exp_with_derivatives, matrix_exp};
use crate::pulse::SinePulse;

/// Restarts run concurrently in groups of this size; the goal is checked
/// between groups, so the restart count never depends on scheduling.
const RESTART_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    /// Maximize |Tr(U_tar† U)|²/N² over the blockade block.
    Gate { target: Operator },
    /// Maximize |⟨target|U|initial⟩|².
    State { initial: Array1<C64>, target: Array1<C64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Steepest ascent, backtracking from step 0.1 by halves.
    Armijo,
    /// Quasi-Newton direction with the same backtracking test from step 1.
    #[default]
    Bfgs,
}

fn default_steps() -> usize {
    200
}
fn default_restarts() -> usize {
    16
}
fn default_iterations() -> usize {
    400
}
fn default_gtol() -> f64 {
    1e-9
}
fn default_goal() -> f64 {
    1.0 - 1e-4
}
fn default_sigma() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizationProblem {
    pub task: Task,
    pub config: BlockadeConfig,
    pub duration: f64,
    pub k_max: usize,
    /// λ_g. When set, dynamics follow H_dr^new with independent sine
    /// coefficients for α and Λ₁, and the objective is F − λ_g·g.
    #[serde(default)]
    pub penalty: Option<f64>,
    /// Fock truncation; defaults to r+1 (or r+4 with a penalty).
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_gtol")]
    pub gradient_tolerance: f64,
    #[serde(default = "default_goal")]
    pub fidelity_goal: f64,
    #[serde(default = "default_sigma")]
    pub sigma_init: f64,
    #[serde(default)]
    pub step_rule: StepRule,
    /// Starting point for restart 0 (α coefficients, then Λ₁ coefficients
    /// in penalized mode). Other restarts are random.
    #[serde(default)]
    pub initial: Option<Vec<C64>>,
}

impl OptimizationProblem {
    pub fn gate(config: BlockadeConfig, target: Operator, duration: f64, k_max: usize) -> Self {
        Self::with_task(Task::Gate { target }, config, duration, k_max)
    }

    pub fn state(
        config: BlockadeConfig,
        initial: Array1<C64>,
        target: Array1<C64>,
        duration: f64,
        k_max: usize,
    ) -> Self {
        Self::with_task(Task::State { initial, target }, config, duration, k_max)
    }

    fn with_task(task: Task, config: BlockadeConfig, duration: f64, k_max: usize) -> Self {
        Self {
            task,
            config,
            duration,
            k_max,
            penalty: None,
            dim: None,
            steps: default_steps(),
            restarts: default_restarts(),
            max_iterations: default_iterations(),
            gradient_tolerance: default_gtol(),
            fidelity_goal: default_goal(),
            sigma_init: default_sigma(),
            step_rule: StepRule::default(),
            initial: None,
        }
    }

    pub fn dim(&self) -> usize {
        let n = self.config.n();
        self.dim.unwrap_or(if self.penalty.is_some() { n + 3 } else { n })
    }

    /// Real parameter count: Re and Im of each coefficient.
    pub fn parameter_count(&self) -> usize {
        let per = 2 * self.k_max;
        if self.penalty.is_some() {
            2 * per
        } else {
            per
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let n = self.config.n();
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::Config("duration must be positive".into()));
        }
        if self.k_max == 0 || self.steps == 0 {
            return Err(Error::Config("k_max and steps must be positive".into()));
        }
        if !(self.fidelity_goal > 0.0 && self.fidelity_goal <= 1.0) {
            return Err(Error::Config("fidelity goal must lie in (0, 1]".into()));
        }
        if let Some(l) = self.penalty {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::Config("penalty weight must be non-negative".into()));
            }
        }
        if !(self.sigma_init.is_finite() && self.sigma_init >= 0.0) {
            return Err(Error::Config("sigma_init must be non-negative".into()));
        }
        let d = self.dim();
        if d < n {
            return Err(Error::Dimension(format!("dim {d} below blockade size {n}")));
        }
        if self.penalty.is_some() {
            FockSpace::new(d)?.require_above(self.config.r, 2)?;
        } else if d > n {
            FockSpace::new(d)?.require_above(self.config.r, 1)?;
        }
        match &self.task {
            Task::Gate { target } => {
                if target.dim() != (n, n) {
                    return Err(Error::Dimension(format!("target must be {n}x{n}")));
                }
                if unitarity_defect(target) > 1e-10 {
                    return Err(Error::Contract("target is not unitary".into()));
                }
            }
            Task::State { initial, target } => {
                for (v, name) in [(initial, "initial"), (target, "target")] {
                    if v.len() != n {
                        return Err(Error::Dimension(format!("{name} state must have {n} entries")));
                    }
                    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
                    if (norm - 1.0).abs() > 1e-10 {
                        return Err(Error::Contract(format!("{name} state is not normalized")));
                    }
                }
            }
        }
        if let Some(x0) = &self.initial {
            if 2 * x0.len() != self.parameter_count() {
                return Err(Error::Config("initial coefficients have the wrong length".into()));
            }
        }
        Ok(())
    }
}

/// Lab-frame-free description of H(α, Λ) and its partial derivatives.
enum Model {
    /// H = D + Re α·G_re + Im α·G_im.
    Linear {
        drift: Operator,
        g_re: Operator,
        g_im: Operator,
    },
    /// H = K + χ(αB₁ + h.c.) + (ΛB₀ + h.c.) + (χ/2)(α²B₂ + h.c.),
    /// B₀ = a†, B₁ = a†n, B₂ = a†².
    New {
        chi: f64,
        kerr: Operator,
        b0: Operator,
        b1: Operator,
        b2: Operator,
    },
}

fn herm(z: C64, b: &Operator) -> Operator {
    b.mapv(|v| z * v) + dagger(b).mapv(|v| z.conj() * v)
}

impl Model {
    fn build(problem: &OptimizationProblem) -> Result<Self> {
        let c = &problem.config;
        let d = problem.dim();
        if problem.penalty.is_some() {
            let s = FockSpace::new(d)?;
            let ad = creation(s);
            let b1 = ad.dot(&number(s));
            let b2 = ad.dot(&ad);
            return Ok(Model::New {
                chi: c.chi,
                kerr: crate::fock::kerr(s, c.chi),
                b0: ad,
                b1,
                b2,
            });
        }
        if d == c.n() {
            let p = h_dr_projected(c)?;
            return Ok(Model::Linear {
                g_re: p.control_re.mapv(|z| z * c.chi),
                g_im: p.control_im.mapv(|z| z * c.chi),
                drift: p.drift,
            });
        }
        let s = FockSpace::new(d)?;
        let drift = h_dr(C64::from(0.0), c, s)?;
        Ok(Model::Linear {
            g_re: h_dr(C64::from(1.0), c, s)? - &drift,
            g_im: h_dr(I, c, s)? - &drift,
            drift,
        })
    }

    fn hamiltonian(&self, alpha: C64, lambda: C64) -> Operator {
        match self {
            Model::Linear { drift, g_re, g_im } => {
                let mut h = drift.clone();
                h.scaled_add(C64::from(alpha.re), g_re);
                h.scaled_add(C64::from(alpha.im), g_im);
                h
            }
            Model::New { chi, kerr, b0, b1, b2 } => {
                kerr + &herm(alpha * *chi, b1) + &herm(lambda, b0) + &herm(0.5 * *chi * alpha * alpha, b2)
            }
        }
    }

    /// ∂H/∂(Re α, Im α[, Re Λ, Im Λ]).
    fn partials(&self, alpha: C64) -> Vec<Operator> {
        match self {
            Model::Linear { g_re, g_im, .. } => vec![g_re.clone(), g_im.clone()],
            Model::New { chi, b0, b1, b2, .. } => {
                let c = C64::from(*chi);
                vec![
                    herm(c, b1) + herm(c * alpha, b2),
                    herm(c * I, b1) + herm(c * I * alpha, b2),
                    herm(C64::from(1.0), b0),
                    herm(I, b0),
                ]
            }
        }
    }
}

/// Value of the objective and what it is made of.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    /// F, or F − λ_g·g in penalized mode.
    pub objective: f64,
    pub fidelity: f64,
    /// Time-averaged leakage out of {|0⟩ … |r⟩}; `None` when the
    /// truncation equals the blockade size.
    pub leakage: Option<f64>,
    #[serde(skip)]
    pub unitary: Operator,
}

/// Objective evaluator for one problem; reusable across calls.
pub struct Evaluator {
    model: Model,
    k_max: usize,
    n: usize,
    r: usize,
    dim: usize,
    steps: usize,
    dt: f64,
    duration: f64,
    penalty: f64,
    track_leak: bool,
    penalized: bool,
    task: Task,
    /// sin(kπt_j/T) at the step midpoints, row j.
    basis: Vec<Vec<f64>>,
}

impl Evaluator {
    pub fn new(problem: &OptimizationProblem) -> Result<Self> {
        problem.validate()?;
        let dt = problem.duration / problem.steps as f64;
        let basis = (0..problem.steps)
            .map(|j| {
                let t = (j as f64 + 0.5) * dt;
                (1..=problem.k_max)
                    .map(|k| (k as f64 * PI * t / problem.duration).sin())
                    .collect()
            })
            .collect();
        let dim = problem.dim();
        Ok(Self {
            model: Model::build(problem)?,
            k_max: problem.k_max,
            n: problem.config.n(),
            r: problem.config.r,
            dim,
            steps: problem.steps,
            dt,
            duration: problem.duration,
            penalty: problem.penalty.unwrap_or(0.0),
            track_leak: dim > problem.config.n(),
            penalized: problem.penalty.is_some(),
            task: problem.task.clone(),
            basis,
        })
    }

    pub fn parameter_count(&self) -> usize {
        if self.penalized {
            4 * self.k_max
        } else {
            2 * self.k_max
        }
    }

    /// Drive values at step j: (α, Λ₁).
    fn drives(&self, x: &[f64], j: usize) -> (C64, C64) {
        let k = self.k_max;
        let s = &self.basis[j];
        let sum = |off: usize| {
            (0..k).fold(C64::from(0.0), |acc, i| {
                acc + C64::new(x[off + i], x[off + k + i]) * s[i]
            })
        };
        let alpha = sum(0);
        let lambda = if self.penalized { sum(2 * k) } else { C64::from(0.0) };
        (alpha, lambda)
    }

    fn generator(&self, x: &[f64], j: usize) -> (Operator, C64) {
        let (a, l) = self.drives(x, j);
        (self.model.hamiltonian(a, l).mapv(|z| -I * self.dt * z), a)
    }

    /// Trapezoid weight of boundary sample j, including 1/T and the
    /// per-input normalization of the leakage average.
    fn leak_weight(&self, j: usize) -> f64 {
        let w = if j == 0 || j == self.steps { 0.5 } else { 1.0 } * self.dt / self.duration;
        match self.task {
            Task::Gate { .. } => w / self.n as f64,
            Task::State { .. } => w,
        }
    }

    fn leak_density(&self, u: &Operator) -> f64 {
        match &self.task {
            Task::Gate { .. } => crate::propagate::unitary_leak_density(u, self.r),
            Task::State { initial, .. } => {
                let psi = u.dot(&embed_vec(initial, self.dim));
                crate::propagate::state_leak_density(&psi, self.r)
            }
        }
    }

    /// Cotangent C of the leak density: dℓ = Re Tr(C† dU).
    fn leak_cotangent(&self, u: &Operator) -> Operator {
        let d = self.dim;
        let mut c = zeros(d);
        match &self.task {
            Task::Gate { .. } => {
                for i in self.r + 1..d {
                    for j in 0..=self.r {
                        c[[i, j]] = 2.0 * u[[i, j]];
                    }
                }
            }
            Task::State { initial, .. } => {
                let psi0 = embed_vec(initial, d);
                let psi = u.dot(&psi0);
                for i in self.r + 1..d {
                    for j in 0..d {
                        c[[i, j]] = 2.0 * psi[i] * psi0[j].conj();
                    }
                }
            }
        }
        c
    }

    /// Raw fidelity (not clipped) and its cotangent.
    fn fidelity_with_cotangent(&self, u: &Operator) -> (f64, Operator) {
        let d = self.dim;
        match &self.task {
            Task::Gate { target } => {
                let n = self.n;
                let mut z = C64::from(0.0);
                for i in 0..n {
                    for j in 0..n {
                        z += target[[i, j]].conj() * u[[i, j]];
                    }
                }
                let nn = (n * n) as f64;
                let c = embed(target, d).mapv(|w| w * z * (2.0 / nn));
                (z.norm_sqr() / nn, c)
            }
            Task::State { initial, target } => {
                let psi0 = embed_vec(initial, d);
                let phi = embed_vec(target, d);
                let z: C64 = phi.iter().zip(u.dot(&psi0).iter()).map(|(a, b)| a.conj() * b).sum();
                let c = ndarray::Array2::from_shape_fn((d, d), |(i, j)| 2.0 * z * phi[i] * psi0[j].conj());
                (z.norm_sqr(), c)
            }
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        self.check_len(x)?;
        let mut u = identity(self.dim);
        let mut leak = 0.0;
        for j in 0..self.steps {
            let (g, _) = self.generator(x, j);
            u = matrix_exp(&g)?.dot(&u);
            if self.track_leak {
                leak += self.leak_weight(j + 1) * self.leak_density(&u);
            }
        }
        let (f, _) = self.fidelity_with_cotangent(&u);
        Ok(self.finish(f, leak, u))
    }

    fn finish(&self, f: f64, leak: f64, u: Operator) -> Evaluation {
        let f = f.clamp(0.0, 1.0);
        Evaluation {
            objective: f - self.penalty * leak,
            fidelity: f,
            leakage: self.track_leak.then_some(leak),
            unitary: u,
        }
    }

    /// Objective and its gradient with respect to the real parameters.
    pub fn evaluate_with_gradient(&self, x: &[f64]) -> Result<(Evaluation, Vec<f64>)> {
        self.check_len(x)?;
        let s = self.steps;
        let mut us = Vec::with_capacity(s + 1);
        let mut vs = Vec::with_capacity(s);
        let mut ls = Vec::with_capacity(s);
        us.push(identity(self.dim));
        let mut leak = 0.0;
        for j in 0..s {
            let (g, alpha) = self.generator(x, j);
            let dirs: Vec<Operator> = self
                .model
                .partials(alpha)
                .into_iter()
                .map(|p| p.mapv(|z| -I * self.dt * z))
                .collect();
            let (v, l) = exp_with_derivatives(&g, &dirs)?;
            let next = v.dot(&us[j]);
            if self.track_leak {
                leak += self.leak_weight(j + 1) * self.leak_density(&next);
            }
            us.push(next);
            vs.push(v);
            ls.push(l);
        }
        let (f, mut q) = self.fidelity_with_cotangent(&us[s]);
        let with_penalty = self.penalized && self.penalty > 0.0;
        if with_penalty {
            q.scaled_add(
                C64::from(-self.penalty * self.leak_weight(s)),
                &self.leak_cotangent(&us[s]),
            );
        }
        let nd = ls[0].len();
        let mut local = vec![vec![0.0; nd]; s];
        for j in (0..s).rev() {
            // dJ = Re Tr(Q† dV U_j) summed over steps
            let uq = us[j].dot(&dagger(&q));
            for (d, l) in ls[j].iter().enumerate() {
                local[j][d] = l.iter().zip(uq.t().iter()).map(|(a, b)| (a * b).re).sum();
            }
            q = dagger(&vs[j]).dot(&q);
            if with_penalty && j > 0 {
                q.scaled_add(
                    C64::from(-self.penalty * self.leak_weight(j)),
                    &self.leak_cotangent(&us[j]),
                );
            }
        }
        let k = self.k_max;
        let mut grad = vec![0.0; self.parameter_count()];
        for (j, row) in local.iter().enumerate() {
            for i in 0..k {
                let b = self.basis[j][i];
                grad[i] += b * row[0];
                grad[k + i] += b * row[1];
                if self.penalized {
                    grad[2 * k + i] += b * row[2];
                    grad[3 * k + i] += b * row[3];
                }
            }
        }
        let u = us.pop().expect("at least one sample");
        Ok((self.finish(f, leak, u), grad))
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.parameter_count() {
            return Err(Error::Contract(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pulse parameters"));
        }
        Ok(())
    }
}

fn embed_vec(v: &Array1<C64>, dim: usize) -> Array1<C64> {
    let mut out = Array1::zeros(dim);
    out.slice_mut(ndarray::s![..v.len()]).assign(v);
    out
}

/// [Re α₁…Re α_K, Im α₁…Im α_K] from complex coefficients.
pub fn pack(coeffs: &[C64]) -> Vec<f64> {
    coeffs.iter().map(|z| z.re).chain(coeffs.iter().map(|z| z.im)).collect()
}

pub fn unpack(x: &[f64]) -> Vec<C64> {
    let k = x.len() / 2;
    (0..k).map(|i| C64::new(x[i], x[k + i])).collect()
}

/// F (or F − λ_g g) at the given coefficients.
pub fn evaluate_objective(problem: &OptimizationProblem, coeffs: &[C64]) -> Result<Evaluation> {
    Evaluator::new(problem)?.evaluate(&pack(coeffs))
}

/// ∂J/∂Re c + i ∂J/∂Im c for each complex coefficient.
pub fn gradient(problem: &OptimizationProblem, coeffs: &[C64]) -> Result<Vec<C64>> {
    let (_, g) = Evaluator::new(problem)?.evaluate_with_gradient(&pack(coeffs))?;
    Ok(unpack(&g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    FidelityGoal,
    GradientTolerance,
    IterationCap,
    LineSearch,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestartTrace {
    pub index: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    pub fidelity: f64,
    pub objective: f64,
    /// Accepted objective values, starting with the initial point.
    pub history: Vec<f64>,
    #[serde(skip)]
    pub parameters: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EscalationStep {
    pub k_max: usize,
    pub best_fidelity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub converged: bool,
    pub seed: u64,
    pub k_max: usize,
    pub duration: f64,
    pub best_coefficients: Vec<C64>,
    /// Λ₁ coefficients in penalized mode.
    pub best_lambda_coefficients: Option<Vec<C64>>,
    pub best_fidelity: f64,
    pub best_objective: f64,
    pub leakage: Option<f64>,
    pub best_restart: usize,
    pub restarts_run: usize,
    pub total_iterations: usize,
    /// ‖∇_adjoint − ∇_fd‖∞ / max(‖∇_fd‖∞, 1e−3) at the best point,
    /// central differences with h = 1e−5.
    pub gradient_check_residual: f64,
    /// Fidelity of the best pulse recomputed with twice the steps.
    pub refined_fidelity: f64,
    pub traces: Vec<RestartTrace>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub escalation: Vec<EscalationStep>,
}

impl OptimizationReport {
    pub fn best_pulse(&self) -> Result<SinePulse> {
        SinePulse::new(self.duration, self.best_coefficients.clone())
    }

    pub fn best_lambda_pulse(&self) -> Option<Result<SinePulse>> {
        self.best_lambda_coefficients
            .as_ref()
            .map(|c| SinePulse::new(self.duration, c.clone()))
    }
}

fn initial_point(problem: &OptimizationProblem, seed: u64, index: usize) -> Vec<f64> {
    if index == 0 {
        if let Some(x0) = &problem.initial {
            let k = problem.k_max;
            let mut x = pack(&x0[..k]);
            if problem.penalty.is_some() {
                x.extend(pack(&x0[k..]));
            }
            return x;
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let k = problem.k_max;
    let mut x = vec![0.0; problem.parameter_count()];
    for i in 0..k {
        let sd = problem.sigma_init / (i + 1) as f64;
        // sd = 0 is allowed and gives the zero pulse
        let draw = |rng: &mut ChaCha20Rng| {
            if sd > 0.0 {
                Normal::new(0.0, sd).expect("finite sd").sample(rng)
            } else {
                0.0
            }
        };
        x[i] = draw(&mut rng);
        x[k + i] = draw(&mut rng);
    }
    if problem.penalty.is_some() {
        // start Λ₁ at −χrα so that H_dr^new begins as the single-drive frame
        let s = -problem.config.chi * problem.config.r as f64;
        for i in 0..2 * k {
            x[2 * k + i] = s * x[i];
        }
    }
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// One local ascent from the restart's initial point.
fn run_restart(problem: &OptimizationProblem, ev: &Evaluator, seed: u64, index: usize) -> Result<RestartTrace> {
    let p = ev.parameter_count();
    let mut x = initial_point(problem, seed, index);
    let (mut e, mut g) = ev.evaluate_with_gradient(&x)?;
    let mut evaluations = 1;
    let mut history = vec![e.objective];
    let mut hinv: Vec<f64> = identity_flat(p);
    let mut iterations = 0;
    let stop = loop {
        if e.fidelity >= problem.fidelity_goal {
            break StopReason::FidelityGoal;
        }
        if inf_norm(&g) <= problem.gradient_tolerance {
            break StopReason::GradientTolerance;
        }
        if iterations >= problem.max_iterations {
            break StopReason::IterationCap;
        }
        // ascent direction d: we maximize J, so d = H⁻¹∇J
        let (mut d, mut step) = match problem.step_rule {
            StepRule::Armijo => (g.clone(), 0.1),
            StepRule::Bfgs => (matvec(&hinv, &g, p), 1.0),
        };
        if dot(&d, &g) <= 0.0 {
            hinv = identity_flat(p);
            d = g.clone();
        }
        let slope = dot(&d, &g);
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let te = ev.evaluate(&trial)?;
            evaluations += 1;
            if te.objective >= e.objective + 1e-4 * step * slope {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        let Some(xn) = accepted else {
            break StopReason::LineSearch;
        };
        let (en, gn) = ev.evaluate_with_gradient(&xn)?;
        evaluations += 1;
        if problem.step_rule == StepRule::Bfgs {
            // minimizing −J: s = Δx, y = −Δ∇J
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
            bfgs_update(&mut hinv, &s, &y, p);
        }
        x = xn;
        e = en;
        g = gn;
        history.push(e.objective);
        iterations += 1;
    };
    Ok(RestartTrace {
        index,
        iterations,
        evaluations,
        stop,
        fidelity: e.fidelity,
        objective: e.objective,
        history,
        parameters: x,
    })
}

fn identity_flat(p: usize) -> Vec<f64> {
    let mut m = vec![0.0; p * p];
    for i in 0..p {
        m[i * p + i] = 1.0;
    }
    m
}

fn matvec(m: &[f64], v: &[f64], p: usize) -> Vec<f64> {
    (0..p).map(|i| dot(&m[i * p..(i + 1) * p], v)).collect()
}

/// Inverse-Hessian update; skipped when the curvature condition fails.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], p: usize) {
    let sy = dot(s, y);
    if sy <= 1e-12 * dot(s, s).sqrt() * dot(y, y).sqrt() {
        return;
    }
    let rho = 1.0 / sy;
    let hy = matvec(h, y, p);
    let yhy = dot(y, &hy);
    for i in 0..p {
        for j in 0..p {
            h[i * p + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Keeps the higher objective; ties go to the lower restart index.
fn better<'a>(a: &'a RestartTrace, b: &'a RestartTrace) -> &'a RestartTrace {
    if b.objective > a.objective || (b.objective == a.objective && b.index < a.index) {
        b
    } else {
        a
    }
}

/// Central-difference check of the adjoint gradient.
pub fn gradient_check(ev: &Evaluator, x: &[f64], h: f64) -> Result<f64> {
    let (_, g) = ev.evaluate_with_gradient(x)?;
    let fd: Vec<f64> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            Ok((raw_objective(ev, &xp)? - raw_objective(ev, &xm)?) / (2.0 * h))
        })
        .collect::<Result<_>>()?;
    let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
    Ok(inf_norm(&diff) / inf_norm(&fd).max(1e-3))
}

/// Objective without clipping F to [0, 1], for finite differences.
fn raw_objective(ev: &Evaluator, x: &[f64]) -> Result<f64> {
    let e = ev.evaluate(x)?;
    let (f, _) = ev.fidelity_with_cotangent(&e.unitary);
    Ok(f - (e.fidelity - e.objective))
}

/// Multi-restart local optimization. Deterministic for a given seed: each
/// restart draws from its own ChaCha stream, and restarts run in fixed
/// groups so the early stop does not depend on thread timing.
pub fn optimize(problem: &OptimizationProblem, seed: u64) -> Result<OptimizationReport> {
    let ev = Evaluator::new(problem)?;
    let restarts = problem.restarts.max(1);
    let mut traces: Vec<RestartTrace> = Vec::new();
    let mut start = 0;
    while start < restarts {
        let end = (start + RESTART_CHUNK).min(restarts);
        let chunk = (start..end)
            .into_par_iter()
            .map(|i| run_restart(problem, &ev, seed, i))
            .collect::<Result<Vec<_>>>()?;
        traces.extend(chunk);
        start = end;
        if traces.iter().any(|t| t.fidelity >= problem.fidelity_goal) {
            break;
        }
    }
    let best = traces.iter().fold(&traces[0], better).clone();
    let k = problem.k_max;
    let x = &best.parameters;
    let coeffs = unpack(&x[..2 * k]);
    let lambda = problem.penalty.map(|_| unpack(&x[2 * k..]));
    let eval = ev.evaluate(x)?;
    let refined = Evaluator::new(&OptimizationProblem {
        steps: 2 * problem.steps,
        ..problem.clone()
    })?
    .evaluate(x)?
    .fidelity;
    Ok(OptimizationReport {
        converged: best.fidelity >= problem.fidelity_goal,
        seed,
        k_max: k,
        duration: problem.duration,
        best_coefficients: coeffs,
        best_lambda_coefficients: lambda,
        best_fidelity: best.fidelity,
        best_objective: best.objective,
        leakage: eval.leakage,
        best_restart: best.index,
        restarts_run: traces.len(),
        total_iterations: traces.iter().map(|t| t.iterations).sum(),
        gradient_check_residual: gradient_check(&ev, x, 1e-5)?,
        refined_fidelity: refined,
        traces,
        escalation: Vec::new(),
    })
}

pub const K_MAX_START: usize = 4;
pub const K_MAX_STEP: usize = 2;
pub const K_MAX_CAP: usize = 16;

/// Runs [`optimize`] from k_max = 4, adding 2 harmonics while the best
/// infidelity exceeds ten times the allowed one, up to 16. Ignores the
/// problem's own k_max and initial point.
pub fn optimize_escalating(problem: &OptimizationProblem, seed: u64) -> Result<OptimizationReport> {
    let allowed = 1.0 - problem.fidelity_goal;
    let mut steps = Vec::new();
    let mut k = K_MAX_START;
    loop {
        let p = OptimizationProblem {
            k_max: k,
            initial: None,
            ..problem.clone()
        };
        let mut report = optimize(&p, seed)?;
        steps.push(EscalationStep {
            k_max: k,
            best_fidelity: report.best_fidelity,
        });
        let miss = 1.0 - report.best_fidelity;
        if report.converged || miss <= 10.0 * allowed || k + K_MAX_STEP > K_MAX_CAP {
            report.escalation = steps;
            return Ok(report);
        }
        k += K_MAX_STEP;
    }
}

/// Cyclic shift |m⟩ → |m−1 mod N⟩.
pub fn permutation_target(n: usize) -> Operator {
    let mut u = zeros(n);
    for m in 0..n {
        u[[(m + n - 1) % n, m]] = C64::from(1.0);
    }
    u
}

/// (1/√N) Σ e^{2πi mn/N} |m⟩⟨n|.
pub fn fourier_target(n: usize) -> Operator {
    let s = 1.0 / (n as f64).sqrt();
    Operator::from_shape_fn((n, n), |(m, k)| {
        C64::from_polar(s, 2.0 * PI * (m * k) as f64 / n as f64)
    })
}

/// exp(−iH_d0 T), reached by the zero pulse.
pub fn drift_target(config: &BlockadeConfig, duration: f64) -> Result<Operator> {
    let p = h_dr_projected(config)?;
    matrix_exp(&p.drift.mapv(|z| -I * duration * z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::max_abs;
    use crate::frames::h_dr_new;
    use crate::propagate::{fock_state, gate_fidelity, propagate_fixed, Scheme};
    use proptest::prelude::*;
    use rand::Rng;

    fn cfg(r: usize) -> BlockadeConfig {
        BlockadeConfig::new(1.0, 0.0, r).unwrap()
    }

    fn random_coeffs(k: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..k)
            .map(|_| C64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect()
    }

    fn fd_check(problem: &OptimizationProblem, x: &[f64]) {
        let ev = Evaluator::new(problem).unwrap();
        let (_, g) = ev.evaluate_with_gradient(x).unwrap();
        let h = 1e-5;
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (raw_objective(&ev, &xp).unwrap() - raw_objective(&ev, &xm).unwrap()) / (2.0 * h);
            let scale = fd.abs().max(1e-4);
            assert!((g[i] - fd).abs() <= 1e-5 * scale, "component {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn zero_pulse_drift_target_is_exact() {
        let c = cfg(2);
        let p = OptimizationProblem::gate(c.clone(), drift_target(&c, 0.2).unwrap(), 0.2, 3);
        let e = evaluate_objective(&p, &[C64::from(0.0); 3]).unwrap();
        assert!((e.fidelity - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_pulse_misses_permutation() {
        let p = OptimizationProblem::gate(cfg(2), permutation_target(3), 0.2, 3);
        assert!(evaluate_objective(&p, &[C64::from(0.0); 3]).unwrap().fidelity < 1e-28);
    }

    #[test]
    fn evaluation_matches_generic_propagator() {
        let c = cfg(2);
        let p = OptimizationProblem::gate(c.clone(), fourier_target(3), 0.2, 4);
        let coeffs = random_coeffs(4, 3);
        let e = evaluate_objective(&p, &coeffs).unwrap();
        let pulse = SinePulse::new(0.2, coeffs).unwrap();
        let proj = h_dr_projected(&c).unwrap();
        let h = |t: f64| proj.assemble(1.0, pulse.value_unchecked(t));
        let u = propagate_fixed(&h, 0.0, 0.2, 200, Scheme::Midpoint).unwrap();
        assert!(max_abs(&(u.clone() - &e.unitary)) < 1e-12);
        assert!((gate_fidelity(&u, &fourier_target(3), 3) - e.fidelity).abs() < 1e-12);
    }

    #[test]
    fn targets_are_unitary() {
        for n in 2..6 {
            assert!(unitarity_defect(&permutation_target(n)) < 1e-14);
            assert!(unitarity_defect(&fourier_target(n)) < 1e-14);
        }
        let p = permutation_target(3);
        assert_eq!(p[[2, 0]], C64::from(1.0));
        assert_eq!(p[[0, 1]], C64::from(1.0));
        assert_eq!(p[[1, 2]], C64::from(1.0));
    }

    #[test]
    fn gradient_matches_fd_gate() {
        let p = OptimizationProblem::gate(cfg(2), permutation_target(3), 0.2, 4);
        fd_check(&p, &pack(&random_coeffs(4, 11)));
    }

    #[test]
    fn gradient_matches_fd_state_extra_level() {
        let mut p = OptimizationProblem::state(cfg(1), fock_state(2, 0), fock_state(2, 1), 1.0, 3);
        p.dim = Some(4);
        fd_check(&p, &pack(&random_coeffs(3, 5)));
    }

    #[test]
    fn gradient_matches_fd_penalized() {
        let mut p = OptimizationProblem::gate(cfg(2), fourier_target(3), 0.3, 3);
        p.penalty = Some(0.7);
        p.steps = 80;
        let mut x = pack(&random_coeffs(3, 8));
        x.extend(pack(&random_coeffs(3, 9)).iter().map(|v| 0.3 * v));
        fd_check(&p, &x);
        let mut s = OptimizationProblem::state(cfg(1), fock_state(2, 0), fock_state(2, 1), 1.0, 2);
        s.penalty = Some(2.0);
        s.steps = 60;
        let mut x = pack(&random_coeffs(2, 1));
        x.extend(pack(&random_coeffs(2, 2)));
        fd_check(&s, &x);
    }

    #[test]
    fn penalized_model_matches_frames() {
        let mut p = OptimizationProblem::gate(cfg(2), fourier_target(3), 0.3, 2);
        p.penalty = Some(1.0);
        let m = Model::build(&p).unwrap();
        let (a, l) = (C64::new(0.4, -1.1), C64::new(-0.3, 0.8));
        let want = h_dr_new(a, l, &p.config, FockSpace::new(p.dim()).unwrap()).unwrap();
        assert!(max_abs(&(m.hamiltonian(a, l) - want)) < 1e-14);
    }

    #[test]
    fn zero_drive_state_gradient_in_im_alpha() {
        let p = OptimizationProblem::state(cfg(1), fock_state(2, 0), fock_state(2, 1), 1.0, 2);
        let g = gradient(&p, &[C64::from(0.0); 2]).unwrap();
        // F is quadratic at α = 0, so the gradient there is zero; the sign
        // information sits one step away
        assert!(g.iter().all(|z| z.norm() < 1e-14));
        let g = gradient(&p, &[C64::new(0.0, 0.1), C64::from(0.0)]).unwrap();
        assert!(g[0].im.abs() > 1e-3);
        let fd = {
            let f = |v: f64| {
                evaluate_objective(&p, &[C64::new(0.0, v), C64::from(0.0)])
                    .unwrap()
                    .fidelity
            };
            (f(0.1 + 1e-5) - f(0.1 - 1e-5)) / 2e-5
        };
        assert!(g[0].im.signum() == fd.signum());
    }

    #[test]
    fn drift_target_converges_without_iterations() {
        let c = cfg(2);
        let mut p = OptimizationProblem::gate(c.clone(), drift_target(&c, 0.2).unwrap(), 0.2, 3);
        p.initial = Some(vec![C64::from(0.0); 3]);
        p.restarts = 1;
        let r = optimize(&p, 0).unwrap();
        assert!(r.converged && r.total_iterations == 0);
        assert!((r.best_fidelity - 1.0).abs() < 1e-14);
    }

    #[test]
    fn deterministic_and_monotone() {
        let mut p = OptimizationProblem::gate(cfg(1), permutation_target(2), 0.5, 3);
        p.restarts = 5;
        p.max_iterations = 15;
        p.fidelity_goal = 1.0;
        let a = optimize(&p, 42).unwrap();
        let b = optimize(&p, 42).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for t in &a.traces {
            assert!(t.history.windows(2).all(|w| w[1] >= w[0]));
        }
        let c = optimize(&p, 43).unwrap();
        assert_ne!(a.best_coefficients, c.best_coefficients);
        let mut q = p.clone();
        q.step_rule = StepRule::Armijo;
        for t in &optimize(&q, 42).unwrap().traces {
            assert!(t.history.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn qubit_flip_is_found() {
        let mut p = OptimizationProblem::state(cfg(1), fock_state(2, 0), fock_state(2, 1), 1.0, 2);
        p.restarts = 4;
        let r = optimize(&p, 1).unwrap();
        assert!(r.converged, "{}", r.best_fidelity);
        assert!(r.gradient_check_residual < 1e-4);
    }

    #[test]
    fn rejects_bad_problems() {
        let mut p = OptimizationProblem::gate(cfg(2), permutation_target(3), 0.2, 3);
        p.task = Task::Gate {
            target: permutation_target(3).mapv(|z| z * 1.1),
        };
        assert!(matches!(p.validate(), Err(Error::Contract(_))));
        let mut p = OptimizationProblem::gate(cfg(2), permutation_target(2), 0.2, 3);
        assert!(p.validate().is_err());
        p.task = Task::Gate {
            target: permutation_target(3),
        };
        p.fidelity_goal = 0.0;
        assert!(p.validate().is_err());
        let s = OptimizationProblem::state(
            cfg(1),
            Array1::from(vec![C64::from(1.0), C64::from(1.0)]),
            fock_state(2, 1),
            1.0,
            2,
        );
        assert!(s.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn global_phase_invariance(phi in 0.0..(2.0 * PI), seed in 0u64..1000) {
            let c = cfg(2);
            let coeffs = random_coeffs(3, seed);
            let mut p = OptimizationProblem::gate(c, fourier_target(3), 0.2, 3);
            p.steps = 40;
            let a = evaluate_objective(&p, &coeffs).unwrap().objective;
            p.task = Task::Gate { target: fourier_target(3).mapv(|z| z * C64::from_polar(1.0, phi)) };
            let b = evaluate_objective(&p, &coeffs).unwrap().objective;
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn adjoint_matches_fd(r in 1usize..=3, k in 1usize..=6, seed in 0u64..1000) {
            let n = r + 1;
            let mut p = OptimizationProblem::gate(cfg(r), fourier_target(n), 0.3, k);
            p.steps = 30;
            fd_check(&p, &pack(&random_coeffs(k, seed)));
        }
    }
}
