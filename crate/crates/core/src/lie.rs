// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

//! Dynamical Lie algebra rank and the nearest-gap controllability test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{commutator, is_anti_hermitian, Operator, C64, I};
use crate::frames::{h_dr_projected, BlockadeConfig};
use crate::linalg::singular_values;

/// Relative singular-value cutoff for the numerical rank.
pub const RANK_TOL: f64 = 1e-9;

fn flatten(a: &Operator) -> Vec<f64> {
    a.iter().map(|z| z.re).chain(a.iter().map(|z| z.im)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn unflatten(v: &[f64], n: usize) -> Operator {
    let half = n * n;
    Operator::from_shape_fn((n, n), |(i, j)| C64::new(v[i * n + j], v[half + i * n + j]))
}

/// Orthonormal basis of the real span, grown by Gram–Schmidt.
struct Span {
    basis: Vec<Vec<f64>>,
}

impl Span {
    /// Adds the component of `v` outside the span; returns whether it was new.
    fn insert(&mut self, v: &[f64]) -> bool {
        let scale = norm(v);
        if scale == 0.0 {
            return false;
        }
        let mut w = v.to_vec();
        // two passes keep the basis orthogonal to rounding
        for _ in 0..2 {
            for b in &self.basis {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let r = norm(&w);
        if r <= RANK_TOL * scale {
            return false;
        }
        w.iter_mut().for_each(|x| *x /= r);
        self.basis.push(w);
        true
    }
}

/// Dimension of the real Lie algebra generated by anti-Hermitian matrices.
pub fn lie_closure(generators: &[Operator]) -> Result<usize> {
    let Some(first) = generators.first() else {
        return Ok(0);
    };
    let n = first.nrows();
    for g in generators {
        if g.nrows() != n || !g.is_square() {
            return Err(Error::Dimension("generators differ in size".into()));
        }
        if !is_anti_hermitian(g, 1e-12 * (1.0 + crate::fock::max_abs(g))) {
            return Err(Error::Contract("generators must be anti-Hermitian".into()));
        }
    }
    let mut span = Span { basis: Vec::new() };
    for g in generators {
        span.insert(&flatten(g));
    }
    // every pair (i, j) with j < i is commuted exactly once; new elements
    // join the queue and get paired with everything before them
    let mut i = 1;
    while i < span.basis.len() && span.basis.len() < n * n {
        let a = unflatten(&span.basis[i], n);
        for j in 0..i {
            let b = unflatten(&span.basis[j], n);
            span.insert(&flatten(&commutator(&a, &b)));
            if span.basis.len() == n * n {
                break;
            }
        }
        i += 1;
    }
    let rows = span.basis.len();
    let data: Vec<f64> = span.basis.concat();
    let sv = singular_values(rows, 2 * n * n, &data);
    let top = sv.first().copied().unwrap_or(0.0);
    Ok(sv.iter().filter(|&&s| s > RANK_TOL * top).count())
}

/// Which of the two sufficient conditions held.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchirmerBranch {
    /// μ₀ ≠ 0 and μ_k² ≠ μ₀² for every k > 0.
    First,
    /// μ_{N−2} ≠ 0 and μ_k² ≠ μ_{N−2}² for every k < N−2.
    Last,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchirmerReport {
    pub controllable: bool,
    pub branch: Option<SchirmerBranch>,
    pub energies: Vec<f64>,
    pub gaps: Vec<f64>,
    pub trace_h_d0: f64,
    /// "U(N)" when Tr H_d0 ≠ 0, otherwise "SU(N)".
    pub group: String,
    /// r ≠ −2Δ₀/χ + 1, the resonance that kills μ₀.
    pub off_resonance: bool,
    /// Rank of the closure of {iH_cR, iH_cI} equals N² − 1, i.e. the two
    /// controls alone reach SU(N) whatever the drift.
    pub controls_generate_su: bool,
}

fn same(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-12 * scale
}

/// E_k = χ(k²−k)/2 + Δ₀k, μ_k = E_k − E_{k+1} = −χk − Δ₀.
pub fn check_schirmer(config: &BlockadeConfig) -> Result<SchirmerReport> {
    config.validate()?;
    let n = config.n();
    let (chi, d0) = (config.chi, config.delta0);
    let energies: Vec<f64> = (0..n)
        .map(|k| {
            let k = k as f64;
            0.5 * chi * (k * k - k) + d0 * k
        })
        .collect();
    let gaps: Vec<f64> = (0..n - 1).map(|k| -chi * k as f64 - d0).collect();
    let scale = chi.abs().max(d0.abs()) * n as f64 * n as f64;
    let sq = |x: f64| x * x;
    let first = {
        let m0 = gaps[0];
        !same(m0, 0.0, scale) && gaps.iter().skip(1).all(|&m| !same(sq(m), sq(m0), scale * scale))
    };
    let last = {
        let ml = gaps[n - 2];
        !same(ml, 0.0, scale) && gaps[..n - 2].iter().all(|&m| !same(sq(m), sq(ml), scale * scale))
    };
    let branch = if first {
        Some(SchirmerBranch::First)
    } else if last {
        Some(SchirmerBranch::Last)
    } else {
        None
    };
    let trace: f64 = energies.iter().sum();
    let proj = h_dr_projected(config)?;
    let controls = [proj.control_re.mapv(|z| I * z), proj.control_im.mapv(|z| I * z)];
    let su = lie_closure(&controls)? == n * n - 1;
    Ok(SchirmerReport {
        controllable: branch.is_some(),
        branch,
        energies,
        gaps,
        trace_h_d0: trace,
        group: if same(trace, 0.0, scale) {
            format!("SU({n})")
        } else {
            format!("U({n})")
        },
        off_resonance: !same(config.r as f64, -2.0 * d0 / chi + 1.0, 1.0),
        controls_generate_su: su,
    })
}

/// Closure ranks of {iH_d0, iH_cR} and {iH_cR, iH_cI}.
pub fn blockade_closure_ranks(config: &BlockadeConfig) -> Result<(usize, usize)> {
    let p = h_dr_projected(config)?;
    let i = |a: &Operator| a.mapv(|z| I * z);
    let full = lie_closure(&[i(&p.drift), i(&p.control_re)])?;
    let controls = lie_closure(&[i(&p.control_re), i(&p.control_im)])?;
    Ok((full, controls))
}
