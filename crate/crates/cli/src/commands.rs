// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

//! Subcommands. Each one is split into `prepare`, which reads and checks
//! everything and may fail without touching the disk, and `execute`, which
//! runs inside a run directory.

use std::f64::consts::PI;
use std::path::Path;

use blockade_core::budget::{
    bundled_catalog, eps_min_bound, eps_opt_free_kappa_e, feasibility, feasibility_table, optimize_budget,
    parse_catalog, power_for_eps, power_required, total_error, with_optimal_kappa_e, BudgetConstants, ErrorBudget,
    FeasibilityReport, ModulatedRun, PlatformSpec,
};
use blockade_core::fock::{FockSpace, Operator, C64};
use blockade_core::frames::{
    drive_single_from_alpha_tilde, drives_from_alpha, h_dr, h_dr_new, h_dr_projected, BlockadeConfig, DriveProgram,
};
use blockade_core::lie::{blockade_closure_ranks, check_schirmer, SchirmerReport};
use blockade_core::optimizer::{
    optimize, optimize_escalating, pack, Evaluator, OptimizationProblem, OptimizationReport, Task, K_MAX_START,
};
use blockade_core::propagate::{
    fock_density, lindblad_propagate, lindblad_propagate_with, trajectory_csv, unitary_trajectory, PropagationOptions,
    Scheme,
};
use blockade_core::pulse::{
    check_profile, modulate, trotter_error_scan, Envelope, ModulatedPulse, ModulationProfile, ProfileKind,
    ProfileReport, SinePulse, TrotterScanSpec,
};
use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    BudgetTask, FeasibilityTask, PulseSource, RunConfig, SimulateTask, TargetSpec, TrotterScanTask, UniversalityTask,
};
use crate::error::{CliError, CliResult};
use crate::run::{Flags, RunDir};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synthesize,
    Simulate,
    Modulate,
    TrotterScan,
    Budget,
    Feasibility,
    Universality,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synthesize => "synthesize",
            Command::Simulate => "simulate",
            Command::Modulate => "modulate",
            Command::TrotterScan => "trotter-scan",
            Command::Budget => "budget",
            Command::Feasibility => "feasibility",
            Command::Universality => "universality",
        }
    }

    pub fn parse(name: &str) -> CliResult<Self> {
        Ok(match name {
            "synthesize" => Command::Synthesize,
            "simulate" => Command::Simulate,
            "modulate" => Command::Modulate,
            "trotter-scan" => Command::TrotterScan,
            "budget" => Command::Budget,
            "feasibility" => Command::Feasibility,
            "universality" => Command::Universality,
            other => return Err(CliError::Config(format!("unknown command {other:?}"))),
        })
    }
}

/// A validated unit of work.
pub enum Plan {
    Synthesize(Box<SynthPlan>),
    SimulatePulse(Box<PulsePlan>),
    SimulateFock1(Fock1Plan),
    Modulate(ModulatePlan),
    TrotterScan(TrotterScanSpec, BlockadeConfig),
    Budget(BudgetPlan),
    Feasibility(FeasibilityPlan),
    Universality(UniversalityPlan),
}

/// Lines for stdout, plus an error to report after outputs are written.
#[derive(Default)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub deferred: Option<CliError>,
}

impl Outcome {
    fn line(mut self, s: impl Into<String>) -> Self {
        self.lines.push(s.into());
        self
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> CliResult<&'a T> {
    s.as_ref()
        .ok_or_else(|| CliError::Config(format!("the config has no \"{name}\" section")))
}

fn profile_kind(flags: &Flags, configured: Option<&str>) -> CliResult<Option<ProfileKind>> {
    flags
        .profile
        .as_deref()
        .or(configured)
        .map(|p| ProfileKind::parse(p).map_err(CliError::from))
        .transpose()
}

fn positive(v: f64, what: &str) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{what} must be positive")))
    }
}

pub fn prepare(cmd: Command, cfg: &RunConfig, flags: &Flags, seed: u64) -> CliResult<Plan> {
    if flags.eta.is_some() && !matches!(cfg.simulate, Some(SimulateTask::Fock1 { .. }) if cmd == Command::Simulate) {
        return Err(CliError::Config("--eta applies only to simulate in fock1 mode".into()));
    }
    if flags.si && !matches!(cmd, Command::Budget | Command::Feasibility) {
        return Err(CliError::Config("--si applies only to budget and feasibility".into()));
    }
    match cmd {
        Command::Synthesize => prepare_synthesize(cfg, flags, seed).map(|p| Plan::Synthesize(Box::new(p))),
        Command::Simulate => prepare_simulate(cfg, flags),
        Command::Modulate => prepare_modulate(cfg, flags).map(Plan::Modulate),
        Command::TrotterScan => {
            let task = cfg.trotter_scan.clone().unwrap_or(TrotterScanTask {
                m_values: None,
                chi_t_values: None,
                profile: None,
                dim: None,
                steps_per_half: None,
                eps_cutoff: None,
            });
            let spec = task.spec(flags.profile.as_deref())?;
            ModulationProfile::new(spec.profile.clone(), 1)?;
            FockSpace::new(spec.dim)?.require_above(cfg.system.r, 2)?;
            Ok(Plan::TrotterScan(spec, cfg.system.clone()))
        }
        Command::Budget => prepare_budget(cfg, flags).map(Plan::Budget),
        Command::Feasibility => prepare_feasibility(cfg).map(Plan::Feasibility),
        Command::Universality => {
            let r_max = cfg
                .universality
                .as_ref()
                .map_or(UniversalityTask { r_max: 4 }.r_max, |u| u.r_max);
            if !(1..=12).contains(&r_max) {
                return Err(CliError::Config("r_max must lie in 1..=12".into()));
            }
            Ok(Plan::Universality(UniversalityPlan {
                system: cfg.system.clone(),
                r_max,
            }))
        }
    }
}

pub fn execute(plan: &Plan, dir: &mut RunDir) -> CliResult<Outcome> {
    match plan {
        Plan::Synthesize(p) => p.execute(dir),
        Plan::SimulatePulse(p) => p.execute(dir),
        Plan::SimulateFock1(p) => p.execute(dir),
        Plan::Modulate(p) => p.execute(dir),
        Plan::TrotterScan(s, c) => execute_trotter_scan(s, c, dir),
        Plan::Budget(p) => p.execute(dir),
        Plan::Feasibility(p) => p.execute(dir),
        Plan::Universality(p) => p.execute(dir),
    }
}

// ---------------------------------------------------------------- synthesize

/// Pulse coefficients as written by `synthesize` and read by `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseFile {
    pub duration: f64,
    pub k_max: usize,
    pub coefficients: Vec<C64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_coefficients: Option<Vec<C64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
    pub dim: usize,
    pub steps: usize,
    pub target: TargetSpec,
    pub system: BlockadeConfig,
    pub fidelity: f64,
}

pub struct SynthPlan {
    problem: OptimizationProblem,
    target: TargetSpec,
    escalate: bool,
    seed: u64,
    single_drive: Option<ModulationProfile>,
    samples: usize,
    include_loss_correction: bool,
}

fn prepare_synthesize(cfg: &RunConfig, flags: &Flags, seed: u64) -> CliResult<SynthPlan> {
    let s = section(&cfg.synthesize, "synthesize")?;
    positive(s.duration, "duration")?;
    let task = s.target.task(&cfg.system, s.duration)?;
    let mut problem = OptimizationProblem {
        task,
        config: cfg.system.clone(),
        duration: s.duration,
        k_max: s.k_max.unwrap_or(K_MAX_START),
        penalty: s.penalty,
        dim: s.dim,
        initial: s.initial.clone(),
        ..OptimizationProblem::gate(cfg.system.clone(), Operator::eye(cfg.system.n()), s.duration, 1)
    };
    if let Some(v) = s.steps {
        problem.steps = v;
    }
    if let Some(v) = s.restarts {
        problem.restarts = v;
    }
    if let Some(v) = s.max_iterations {
        problem.max_iterations = v;
    }
    if let Some(v) = s.gradient_tolerance {
        problem.gradient_tolerance = v;
    }
    if let Some(v) = s.fidelity_goal {
        problem.fidelity_goal = v;
    }
    if let Some(v) = s.sigma_init {
        problem.sigma_init = v;
    }
    if let Some(v) = s.step_rule {
        problem.step_rule = v;
    }
    if problem.restarts == 0 {
        return Err(CliError::Config("restarts must be at least 1".into()));
    }
    problem.validate()?;
    let single_drive = match profile_kind(flags, s.profile.as_deref())? {
        Some(kind) => {
            let m = s
                .periods
                .ok_or_else(|| CliError::Config("a profile needs \"periods\"".into()))?;
            let prof = ModulationProfile::new(kind, m)?;
            let report = check_profile(&prof.kind);
            if !report.passed {
                return Err(CliError::Config(format!(
                    "profile rejected: {}",
                    report.failures.join("; ")
                )));
            }
            Some(prof)
        }
        None => None,
    };
    if s.samples < 2 {
        return Err(CliError::Config("samples must be at least 2".into()));
    }
    Ok(SynthPlan {
        problem,
        target: s.target.clone(),
        escalate: s.k_max.is_none(),
        seed,
        single_drive,
        samples: s.samples,
        include_loss_correction: s.include_loss_correction.unwrap_or(cfg.system.kappa() > 0.0),
    })
}

impl SynthPlan {
    fn execute(&self, dir: &mut RunDir) -> CliResult<Outcome> {
        let report = if self.escalate {
            optimize_escalating(&self.problem, self.seed)?
        } else {
            optimize(&self.problem, self.seed)?
        };
        dir.write_json("report.json", &report)?;
        let mut problem = self.problem.clone();
        problem.k_max = report.k_max;
        dir.write_json(
            "pulse.json",
            &PulseFile {
                duration: report.duration,
                k_max: report.k_max,
                coefficients: report.best_coefficients.clone(),
                lambda_coefficients: report.best_lambda_coefficients.clone(),
                penalty: problem.penalty,
                dim: problem.dim(),
                steps: problem.steps,
                target: self.target.clone(),
                system: problem.config.clone(),
                fidelity: report.best_fidelity,
            },
        )?;
        let program = self.two_drive_program(&report)?;
        dir.write_table("drive_program", || program.to_csv(), &program)?;
        if let Some(prof) = &self.single_drive {
            let tilde = modulate(Envelope::from(report.best_pulse()?), prof.clone())?;
            let single = drive_single_from_alpha_tilde(&tilde, &problem.config, self.samples)?;
            dir.write_table("drive_single", || single.to_csv(), &single)?;
        }
        let mut out = Outcome::default().line(format!(
            "fidelity {:.10} (refined {:.10}), k_max {}, {} restarts, best restart {}",
            report.best_fidelity, report.refined_fidelity, report.k_max, report.restarts_run, report.best_restart
        ));
        if let Some(g) = report.leakage {
            out = out.line(format!("leakage {g:.3e}"));
        }
        if !report.converged {
            out.deferred = Some(CliError::NotConverged(format!(
                "best fidelity {:.10} below goal {}",
                report.best_fidelity, problem.fidelity_goal
            )));
        }
        Ok(out)
    }

    /// Λ₁, Λ₂ and carrier phase for the optimized α. In penalized mode the
    /// linear drive is shifted by Λ + rχα, the difference between the
    /// optimized a† coefficient and the −rχα one that the standard
    /// translation assumes.
    fn two_drive_program(&self, report: &OptimizationReport) -> CliResult<DriveProgram> {
        let alpha = report.best_pulse()?;
        let config = &self.problem.config;
        let mut p = drives_from_alpha(
            &Envelope::from(alpha.clone()),
            config,
            self.samples,
            self.include_loss_correction,
        )?;
        if let Some(lam) = report.best_lambda_pulse() {
            let lam = lam?;
            let r = config.r as f64;
            for (i, &t) in p.times.iter().enumerate() {
                p.lambda1[i] += lam.value_unchecked(t) + r * config.chi * alpha.value_unchecked(t);
            }
        }
        Ok(p)
    }
}

// ------------------------------------------------------------------ simulate

fn prepare_simulate(cfg: &RunConfig, flags: &Flags) -> CliResult<Plan> {
    match section(&cfg.simulate, "simulate")? {
        SimulateTask::Pulse {
            pulse,
            target,
            dim,
            steps,
            trajectory,
        } => {
            if flags.profile.is_some() {
                return Err(CliError::Config(
                    "--profile applies to simulate only in fock1 mode".into(),
                ));
            }
            let src = pulse
                .as_ref()
                .ok_or_else(|| CliError::Config("simulate needs a pulse (file or coefficients)".into()))?;
            let file = load_pulse(src)?;
            let target = target
                .clone()
                .or_else(|| file.as_ref().map(|f| f.target.clone()))
                .ok_or_else(|| CliError::Config("simulate needs a target".into()))?;
            let (duration, coeffs, lambda, penalty) = match &file {
                Some(f) => (
                    f.duration,
                    f.coefficients.clone(),
                    f.lambda_coefficients.clone(),
                    f.penalty,
                ),
                None => (
                    src.duration.unwrap_or(f64::NAN),
                    src.coefficients.clone().unwrap_or_default(),
                    None,
                    None,
                ),
            };
            positive(duration, "pulse duration")?;
            if coeffs.is_empty() {
                return Err(CliError::Config("pulse has no coefficients".into()));
            }
            let mut problem = OptimizationProblem {
                task: target.task(&cfg.system, duration)?,
                penalty,
                dim: dim.or(file.as_ref().map(|f| f.dim)),
                ..OptimizationProblem::gate(
                    cfg.system.clone(),
                    Operator::eye(cfg.system.n()),
                    duration,
                    coeffs.len(),
                )
            };
            if let Some(s) = steps.or(file.as_ref().map(|f| f.steps)) {
                problem.steps = s;
            }
            if penalty.is_some() != lambda.is_some() {
                return Err(CliError::Config("penalized pulses need lambda coefficients".into()));
            }
            if let Some(l) = &lambda {
                if l.len() != coeffs.len() {
                    return Err(CliError::Config("alpha and lambda coefficient counts differ".into()));
                }
            }
            problem.validate()?;
            Ok(Plan::SimulatePulse(Box::new(PulsePlan {
                alpha: SinePulse::new(duration, coeffs)?,
                lambda: lambda.map(|l| SinePulse::new(duration, l)).transpose()?,
                problem,
                trajectory: *trajectory,
            })))
        }
        SimulateTask::Fock1 {
            duration,
            profile,
            periods,
            dim,
            eta,
            steps_per_half,
        } => {
            positive(*duration, "duration")?;
            let etas = match flags.eta {
                Some(e) => vec![e],
                None if eta.is_empty() => vec![0.0],
                None => eta.clone(),
            };
            if etas.iter().any(|e| !e.is_finite()) {
                return Err(CliError::Config("eta values must be finite".into()));
            }
            if cfg.system.r != 1 {
                return Err(CliError::Config("fock1 mode needs r = 1".into()));
            }
            let modulated = match profile_kind(flags, profile.as_deref())? {
                Some(kind) => {
                    let m = periods.ok_or_else(|| CliError::Config("a profile needs \"periods\"".into()))?;
                    ModulationProfile::new(kind.clone(), m)?;
                    let d = dim.unwrap_or(8);
                    FockSpace::new(d)?.require_above(1, 2)?;
                    Some((kind, m, d))
                }
                None => {
                    if etas.iter().any(|&e| e != 0.0) {
                        return Err(CliError::Config("eta needs a modulated run (set a profile)".into()));
                    }
                    None
                }
            };
            Ok(Plan::SimulateFock1(Fock1Plan {
                system: cfg.system.clone(),
                duration: *duration,
                modulated,
                etas,
                steps_per_half: steps_per_half.unwrap_or(16),
            }))
        }
    }
}

fn load_pulse(src: &PulseSource) -> CliResult<Option<PulseFile>> {
    match (&src.file, &src.coefficients) {
        (Some(_), Some(_)) => Err(CliError::Config("give a pulse file or coefficients, not both".into())),
        (None, None) => Err(CliError::Config("pulse needs \"file\" or \"coefficients\"".into())),
        (None, Some(_)) => Ok(None),
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read pulse file {path}: {e}")))?;
            let f: PulseFile =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("pulse file {path}: {e}")))?;
            if f.coefficients.len() != f.k_max {
                return Err(CliError::Config(format!(
                    "pulse file {path}: k_max disagrees with coefficients"
                )));
            }
            Ok(Some(f))
        }
    }
}

pub struct PulsePlan {
    problem: OptimizationProblem,
    alpha: SinePulse,
    lambda: Option<SinePulse>,
    trajectory: bool,
}

#[derive(Debug, Serialize)]
struct PulseSimulation {
    kappa: f64,
    dim: usize,
    steps: usize,
    /// Unitary fidelity from the synthesis propagator.
    lossless_fidelity: f64,
    lossless_leakage: Option<f64>,
    /// With loss: ⟨ψ_tar|ρ(T)|ψ_tar⟩ from the initial state (|0⟩ for gates).
    lossy_fidelity: Option<f64>,
    /// With loss: population outside the blockade subspace at T.
    lossy_leakage: Option<f64>,
    lindblad_steps: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Trajectory {
    t: Vec<f64>,
    populations: Vec<Vec<f64>>,
    out_of_blockade: Vec<f64>,
}

impl PulsePlan {
    fn hamiltonian(&self) -> CliResult<impl Fn(f64) -> Operator + '_> {
        let c = &self.problem.config;
        let d = self.problem.dim();
        let space = FockSpace::new(d)?;
        let projected = if self.lambda.is_none() && d == c.n() {
            Some(h_dr_projected(c)?)
        } else {
            None
        };
        Ok(move |t: f64| {
            let a = self.alpha.value_unchecked(t);
            match (&self.lambda, &projected) {
                (Some(l), _) => h_dr_new(a, l.value_unchecked(t), c, space).expect("dimension validated"),
                (None, Some(p)) => p.assemble(c.chi, a),
                (None, None) => h_dr(a, c, space).expect("dimension validated"),
            }
        })
    }

    /// (initial, target) embedded in the simulation space.
    fn states(&self) -> (Array1<C64>, Array1<C64>) {
        let d = self.problem.dim();
        let embed = |v: &Array1<C64>| {
            let mut out = Array1::zeros(d);
            out.slice_mut(ndarray::s![..v.len()]).assign(v);
            out
        };
        match &self.problem.task {
            Task::State { initial, target } => (embed(initial), embed(target)),
            Task::Gate { target } => {
                let n = target.nrows();
                let mut e0 = Array1::zeros(n);
                e0[0] = C64::from(1.0);
                (embed(&e0), embed(&target.dot(&e0)))
            }
        }
    }

    fn execute(&self, dir: &mut RunDir) -> CliResult<Outcome> {
        let mut x = pack(self.alpha.coeffs());
        if let Some(l) = &self.lambda {
            x.extend(pack(l.coeffs()));
        }
        let ev = Evaluator::new(&self.problem)?.evaluate(&x)?;
        let c = &self.problem.config;
        let kappa = c.kappa();
        let d = self.problem.dim();
        let h = self.hamiltonian()?;
        let (psi0, phi) = self.states();
        let mut sim = PulseSimulation {
            kappa,
            dim: d,
            steps: self.problem.steps,
            lossless_fidelity: ev.fidelity,
            lossless_leakage: ev.leakage,
            lossy_fidelity: None,
            lossy_leakage: None,
            lindblad_steps: None,
        };
        if kappa > 0.0 {
            let rho0 = outer(&psi0);
            let opts = PropagationOptions {
                scheme: Scheme::Magnus4,
                ..PropagationOptions::default()
            };
            let res = lindblad_propagate_with(&rho0, &h, kappa, self.problem.duration, self.problem.steps, &opts)?;
            let f = phi
                .iter()
                .enumerate()
                .flat_map(|(i, a)| phi.iter().enumerate().map(move |(j, b)| (i, j, a, b)))
                .map(|(i, j, a, b)| a.conj() * res.rho[[i, j]] * b)
                .sum::<C64>()
                .re;
            let inside: f64 = (0..c.n()).map(|k| res.rho[[k, k]].re).sum();
            sim.lossy_fidelity = Some(f);
            sim.lossy_leakage = Some(1.0 - inside);
            sim.lindblad_steps = Some(res.steps);
        }
        dir.write_json("simulation.json", &sim)?;
        if self.trajectory {
            let traj = unitary_trajectory(&h, self.problem.duration, self.problem.steps, Scheme::Midpoint)?;
            let rows = Trajectory {
                t: traj.iter().map(|(t, _)| *t).collect(),
                populations: traj
                    .iter()
                    .map(|(_, u)| u.dot(&psi0).iter().map(|z| z.norm_sqr()).collect())
                    .collect(),
                out_of_blockade: traj
                    .iter()
                    .map(|(_, u)| u.dot(&psi0).iter().skip(c.n()).map(|z| z.norm_sqr()).sum())
                    .collect(),
            };
            dir.write_table("trajectory", || trajectory_csv(&traj, &psi0, c.r), &rows)?;
        }
        let mut out = Outcome::default().line(format!("lossless fidelity {:.12}", sim.lossless_fidelity));
        if let Some(f) = sim.lossy_fidelity {
            out = out.line(format!("fidelity with loss (kappa {kappa}) {f:.12}"));
        }
        Ok(out)
    }
}

fn outer(psi: &Array1<C64>) -> Operator {
    let d = psi.len();
    Operator::from_shape_fn((d, d), |(i, j)| psi[i] * psi[j].conj())
}

pub struct Fock1Plan {
    system: BlockadeConfig,
    duration: f64,
    modulated: Option<(ProfileKind, u64, usize)>,
    etas: Vec<f64>,
    steps_per_half: usize,
}

#[derive(Debug, Clone, Serialize)]
struct EtaRow {
    eta: f64,
    infidelity: f64,
    fidelity: f64,
}

#[derive(Debug, Serialize)]
struct Fock1Simulation {
    duration: f64,
    alpha: f64,
    kappa: f64,
    profile: Option<String>,
    periods: Option<u64>,
    dim: usize,
    rows: Vec<EtaRow>,
    /// ε/(κT) for the unmodulated two-level run with loss.
    eps_over_kappa_t: Option<f64>,
}

impl Fock1Plan {
    fn execute(&self, dir: &mut RunDir) -> CliResult<Outcome> {
        let c = &self.system;
        let alpha = PI / (2.0 * c.chi.abs() * self.duration);
        let kappa = c.kappa();
        let (rows, dim) = match &self.modulated {
            Some((kind, m, d)) => {
                let rows = self
                    .etas
                    .par_iter()
                    .map(|&eta| {
                        let mut run = ModulatedRun::fock1(c.clone(), self.duration, *m, kind.clone(), *d);
                        run.eta = eta;
                        run.steps_per_half = self.steps_per_half;
                        let eps = run.infidelity()?;
                        Ok(EtaRow {
                            eta,
                            infidelity: eps,
                            fidelity: 1.0 - eps,
                        })
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                (rows, *d)
            }
            None => {
                let p = h_dr_projected(c)?;
                let h = p.assemble(c.chi, C64::from(alpha));
                let res = lindblad_propagate(&fock_density(2, 0), &|_t: f64| h.clone(), kappa, self.duration, 1)?;
                let eps = 1.0 - res.rho[[1, 1]].re;
                (
                    vec![EtaRow {
                        eta: 0.0,
                        infidelity: eps,
                        fidelity: 1.0 - eps,
                    }],
                    2,
                )
            }
        };
        let eps_over_kappa_t = match (&self.modulated, kappa > 0.0) {
            (None, true) => Some(rows[0].infidelity / (kappa * self.duration)),
            _ => None,
        };
        let sim = Fock1Simulation {
            duration: self.duration,
            alpha,
            kappa,
            profile: self.modulated.as_ref().map(|(k, _, _)| k.name()),
            periods: self.modulated.as_ref().map(|(_, m, _)| *m),
            dim,
            rows: rows.clone(),
            eps_over_kappa_t,
        };
        dir.write_json("simulation.json", &sim)?;
        dir.write_table(
            "eta_scan",
            || {
                let mut s = String::from("eta,infidelity,fidelity\n");
                for r in &rows {
                    s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", r.eta, r.infidelity, r.fidelity));
                }
                s
            },
            &rows,
        )?;
        let mut out = Outcome::default();
        for r in &rows {
            out = out.line(format!("eta {:<10} fidelity {:.12}", r.eta, r.fidelity));
        }
        if let Some(v) = eps_over_kappa_t {
            out = out.line(format!("eps/(kappa T) {v:.6}"));
        }
        Ok(out)
    }
}

// ------------------------------------------------------------------ modulate

pub struct ModulatePlan {
    system: BlockadeConfig,
    pulse: ModulatedPulse,
    check: ProfileReport,
    samples: usize,
}

fn prepare_modulate(cfg: &RunConfig, flags: &Flags) -> CliResult<ModulatePlan> {
    let s = section(&cfg.modulate, "modulate")?;
    let envelope: Envelope = match s.constant_alpha {
        Some(a) => {
            if s.pulse.file.is_some() || s.pulse.coefficients.is_some() {
                return Err(CliError::Config("constant_alpha excludes pulse coefficients".into()));
            }
            let t = s
                .pulse
                .duration
                .ok_or_else(|| CliError::Config("constant_alpha needs pulse.duration".into()))?;
            Envelope::constant(positive(t, "duration")?, a)
        }
        None => match load_pulse(&s.pulse)? {
            Some(f) => SinePulse::new(f.duration, f.coefficients)?.into(),
            None => SinePulse::new(
                s.pulse.duration.unwrap_or(f64::NAN),
                s.pulse.coefficients.clone().unwrap_or_default(),
            )?
            .into(),
        },
    };
    let kind = profile_kind(flags, s.profile.as_deref())?
        .ok_or_else(|| CliError::Config("modulate needs a profile".into()))?;
    let check = check_profile(&kind);
    let pulse = modulate(envelope, ModulationProfile::new(kind, s.periods)?)?;
    if s.samples < 2 {
        return Err(CliError::Config("samples must be at least 2".into()));
    }
    Ok(ModulatePlan {
        system: cfg.system.clone(),
        pulse,
        check,
        samples: s.samples,
    })
}

impl ModulatePlan {
    fn execute(&self, dir: &mut RunDir) -> CliResult<Outcome> {
        dir.write_json("profile_check.json", &self.check)?;
        let program = drive_single_from_alpha_tilde(&self.pulse, &self.system, self.samples)?;
        dir.write_table("drive_single", || program.to_csv(), &program)?;
        Ok(Outcome::default().line(format!(
            "profile {} over {} periods, {} samples",
            self.check.profile,
            self.pulse.profile.periods,
            program.len()
        )))
    }
}

// -------------------------------------------------------------- trotter-scan

#[derive(Debug, Serialize)]
struct TrotterFit {
    profile: String,
    dim: usize,
    eps_cutoff: f64,
    fitted_points: usize,
    slope_m: f64,
    slope_chi_t: f64,
    fit_prefactor: f64,
    c2: f64,
}

fn execute_trotter_scan(spec: &TrotterScanSpec, config: &BlockadeConfig, dir: &mut RunDir) -> CliResult<Outcome> {
    let scan = trotter_error_scan(spec, config)?;
    dir.write_table("scan", || scan.to_csv(), &scan.points)?;
    let fit = TrotterFit {
        profile: spec.profile.name(),
        dim: spec.dim,
        eps_cutoff: spec.eps_cutoff,
        fitted_points: scan.fitted_points,
        slope_m: scan.slope_m,
        slope_chi_t: scan.slope_chi_t,
        fit_prefactor: scan.fit_prefactor,
        c2: scan.c2,
    };
    dir.write_json("fit.json", &fit)?;
    Ok(Outcome::default().line(format!(
        "c2 {:.4}, slope in M {:.3}, slope in chi*T {:.3} ({} points fitted)",
        fit.c2, fit.slope_m, fit.slope_chi_t, fit.fitted_points
    )))
}

// -------------------------------------------------------------------- budget

pub struct BudgetPlan {
    config: BlockadeConfig,
    constants: BudgetConstants,
    si: bool,
    task: BudgetTask,
}

#[derive(Debug, Serialize)]
struct BudgetOutput {
    units: &'static str,
    config: BlockadeConfig,
    constants: BudgetConstants,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimum: Option<ErrorBudget>,
    /// ε_opt with κ_e = κ_i/6 at the same power.
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_opt_optimal_kappa_e: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    at_point: Option<ErrorBudget>,
    #[serde(skip_serializing_if = "Option::is_none")]
    power_at_point: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    power_for_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_min: Option<f64>,
}

fn prepare_budget(cfg: &RunConfig, flags: &Flags) -> CliResult<BudgetPlan> {
    let task = section(&cfg.budget, "budget")?.clone();
    if task.p_in.is_none() && task.eps_target.is_none() && task.duration.is_none() {
        return Err(CliError::Config("budget needs p_in, eps_target or duration".into()));
    }
    if task.duration.is_some() != task.periods.is_some() {
        return Err(CliError::Config("duration and periods go together".into()));
    }
    for (v, name) in [
        (task.p_in, "p_in"),
        (task.eps_target, "eps_target"),
        (task.duration, "duration"),
        (task.periods, "periods"),
        (task.c1, "c1"),
        (task.c2, "c2"),
    ] {
        if let Some(v) = v {
            positive(v, name)?;
        }
    }
    let config = if task.optimal_kappa_e {
        with_optimal_kappa_e(&cfg.system)
    } else {
        cfg.system.clone()
    };
    let mut constants = if flags.si {
        let w = cfg
            .system
            .omega_c
            .ok_or_else(|| CliError::Config("--si needs system.omega_c".into()))?;
        BudgetConstants::si(positive(w, "omega_c")?)
    } else {
        BudgetConstants::dimensionless()
    };
    if let Some(v) = task.c1 {
        constants.c1 = v;
    }
    if let Some(v) = task.c2 {
        constants.c2 = v;
    }
    Ok(BudgetPlan {
        config,
        constants,
        si: flags.si,
        task,
    })
}

impl BudgetPlan {
    fn execute(&self, dir: &mut RunDir) -> CliResult<Outcome> {
        let (c, k) = (&self.config, &self.constants);
        let mut out = BudgetOutput {
            units: if self.si { "si" } else { "dimensionless" },
            config: c.clone(),
            constants: *k,
            optimum: None,
            eps_opt_optimal_kappa_e: None,
            at_point: None,
            power_at_point: None,
            eps_target: self.task.eps_target,
            power_for_target: None,
            eps_min: None,
        };
        let mut lines = Vec::new();
        if let Some(p) = self.task.p_in {
            let b = optimize_budget(c, p, k)?;
            lines.push(format!(
                "P_in {p:.4e}: T_opt {:.4e}, M {}, eps_opt {:.4e}",
                b.t_opt.unwrap_or(f64::NAN),
                b.m_int,
                b.eps_opt.unwrap_or(f64::NAN)
            ));
            out.eps_opt_optimal_kappa_e = Some(eps_opt_free_kappa_e(c, p, k));
            out.optimum = Some(b);
        }
        if let (Some(t), Some(m)) = (self.task.duration, self.task.periods) {
            let b = total_error(c, t, m, k)?;
            lines.push(format!("T {t:.4e}, M {m}: eps_tot {:.4e}", b.eps_tot));
            out.at_point = Some(b);
            out.power_at_point = Some(power_required(c, t, m, k)?);
        }
        if let Some(e) = self.task.eps_target {
            let p = power_for_eps(c, e, k)?;
            lines.push(format!("eps {e:.4e} needs P_in {p:.4e}"));
            out.power_for_target = Some(p);
        }
        if let (true, Some(w)) = (self.si, c.omega_c) {
            out.eps_min = Some(eps_min_bound(w, c.chi, c.kappa_i));
        }
        dir.write_json("budget.json", &out)?;
        Ok(Outcome { lines, deferred: None })
    }
}

// --------------------------------------------------------------- feasibility

pub struct FeasibilityPlan {
    platforms: Vec<PlatformSpec>,
    fidelity_target: f64,
}

fn prepare_feasibility(cfg: &RunConfig) -> CliResult<FeasibilityPlan> {
    let task = cfg.feasibility.clone().unwrap_or(FeasibilityTask {
        catalog: None,
        platforms: None,
        fidelity_target: 0.9,
    });
    if !(task.fidelity_target > 0.0 && task.fidelity_target < 1.0) {
        return Err(CliError::Config("fidelity_target must lie in (0, 1)".into()));
    }
    let catalog = match &task.catalog {
        Some(path) => {
            let text = std::fs::read_to_string(Path::new(path))
                .map_err(|e| CliError::Config(format!("cannot read catalog {path}: {e}")))?;
            parse_catalog(&text)?
        }
        None => bundled_catalog(),
    };
    let platforms = match &task.platforms {
        None => catalog,
        Some(names) => names
            .iter()
            .map(|n| {
                catalog
                    .iter()
                    .find(|p| &p.name == n)
                    .cloned()
                    .ok_or_else(|| CliError::Config(format!("no platform named {n:?}")))
            })
            .collect::<CliResult<_>>()?,
    };
    if platforms.is_empty() {
        return Err(CliError::Config("no platforms selected".into()));
    }
    Ok(FeasibilityPlan {
        platforms,
        fidelity_target: task.fidelity_target,
    })
}

impl FeasibilityPlan {
    fn execute(&self, dir: &mut RunDir) -> CliResult<Outcome> {
        let reports = self
            .platforms
            .iter()
            .map(|p| feasibility(p, self.fidelity_target))
            .collect::<blockade_core::Result<Vec<FeasibilityReport>>>()?;
        dir.write_json("feasibility.json", &reports)?;
        let table = feasibility_table(&reports);
        dir.write("feasibility.txt", &table)?;
        let mut out = Outcome {
            lines: table.lines().map(str::to_string).collect(),
            deferred: None,
        };
        if !reports.iter().any(|r| r.feasible) {
            out.deferred = Some(CliError::Infeasible(format!(
                "no platform reaches fidelity {}",
                self.fidelity_target
            )));
        }
        Ok(out)
    }
}

// -------------------------------------------------------------- universality

pub struct UniversalityPlan {
    system: BlockadeConfig,
    r_max: usize,
}

#[derive(Debug, Serialize)]
struct UniversalityRow {
    r: usize,
    schirmer: SchirmerReport,
    /// Dimension of the Lie closure of {iH_d0, iH_cR}.
    closure_rank: usize,
    /// Dimension of the Lie closure of {iH_cR, iH_cI}.
    control_closure_rank: usize,
}

impl UniversalityPlan {
    fn execute(&self, dir: &mut RunDir) -> CliResult<Outcome> {
        let rows = (1..=self.r_max)
            .into_par_iter()
            .map(|r| {
                let c = BlockadeConfig::new(self.system.chi, self.system.delta0, r)?;
                let (closure_rank, control_closure_rank) = blockade_closure_ranks(&c)?;
                Ok(UniversalityRow {
                    r,
                    schirmer: check_schirmer(&c)?,
                    closure_rank,
                    control_closure_rank,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        dir.write_json("universality.json", &rows)?;
        let lines = rows
            .iter()
            .map(|row| {
                let mut l = format!(
                    "r={} {}: {}, closure rank {}",
                    row.r,
                    row.schirmer.group,
                    if row.schirmer.controllable { "yes" } else { "no" },
                    row.closure_rank
                );
                if !row.schirmer.controllable && row.schirmer.controls_generate_su {
                    l.push_str(&format!(" (the two controls alone generate SU({}))", row.r + 1));
                }
                l
            })
            .collect();
        Ok(Outcome { lines, deferred: None })
    }
}
