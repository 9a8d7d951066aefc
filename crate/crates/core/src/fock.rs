// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

//! Truncated Fock space and the dense operators that live on it.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Dense square complex matrix, row-major.
pub type Operator = Array2<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Truncated bosonic space spanned by |0⟩ … |dim−1⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockSpace {
    dim: usize,
}

impl FockSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidSpace(format!("dim = {dim}, need at least 2")));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Checks that `extra` levels above the blockade level `r` exist.
    pub fn require_above(&self, r: usize, extra: usize) -> Result<()> {
        if self.dim < r + 1 + extra {
            return Err(Error::Dimension(format!(
                "dim = {} but r = {r} needs at least {}",
                self.dim,
                r + 1 + extra
            )));
        }
        Ok(())
    }
}

pub fn identity(dim: usize) -> Operator {
    Array2::eye(dim)
}

pub fn zeros(dim: usize) -> Operator {
    Array2::zeros((dim, dim))
}

pub fn annihilation(space: FockSpace) -> Operator {
    let d = space.dim();
    let mut a = zeros(d);
    for n in 1..d {
        a[[n - 1, n]] = C64::from((n as f64).sqrt());
    }
    a
}

pub fn creation(space: FockSpace) -> Operator {
    dagger(&annihilation(space))
}

pub fn number(space: FockSpace) -> Operator {
    diag_real(&(0..space.dim()).map(|n| n as f64).collect::<Vec<_>>())
}

/// (χ/2) a†² a², diagonal with entries (χ/2) n(n−1).
pub fn kerr(space: FockSpace, chi: f64) -> Operator {
    diag_real(
        &(0..space.dim())
            .map(|n| 0.5 * chi * (n * n.saturating_sub(1)) as f64)
            .collect::<Vec<_>>(),
    )
}

/// Projector onto span{|0⟩ … |r⟩}.
pub fn projector(space: FockSpace, r: usize) -> Result<Operator> {
    if r + 1 > space.dim() {
        return Err(Error::Dimension(format!(
            "projector rank {} exceeds dim {}",
            r + 1,
            space.dim()
        )));
    }
    Ok(diag_real(
        &(0..space.dim())
            .map(|n| if n <= r { 1.0 } else { 0.0 })
            .collect::<Vec<_>>(),
    ))
}

pub fn diag_real(values: &[f64]) -> Operator {
    let mut m = zeros(values.len());
    for (n, &v) in values.iter().enumerate() {
        m[[n, n]] = C64::from(v);
    }
    m
}

pub fn dagger(a: &Operator) -> Operator {
    a.t().mapv(|z| z.conj())
}

pub fn commutator(a: &Operator, b: &Operator) -> Operator {
    a.dot(b) - b.dot(a)
}

/// Largest entry modulus.
pub fn max_abs(a: &Operator) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn is_hermitian(h: &Operator, tol: f64) -> bool {
    h.is_square() && max_abs(&(h - &dagger(h))) <= tol
}

pub fn is_anti_hermitian(h: &Operator, tol: f64) -> bool {
    h.is_square() && max_abs(&(h + &dagger(h))) <= tol
}

/// ‖U†U − I‖_max.
pub fn unitarity_defect(u: &Operator) -> f64 {
    max_abs(&(dagger(u).dot(u) - identity(u.nrows())))
}

pub fn trace(a: &Operator) -> C64 {
    a.diag().sum()
}

/// Top-left n×n block.
pub fn block(a: &Operator, n: usize) -> Operator {
    a.slice(ndarray::s![..n, ..n]).to_owned()
}

/// Embeds an n×n matrix in the top-left corner of a dim×dim zero matrix.
pub fn embed(a: &Operator, dim: usize) -> Operator {
    let n = a.nrows();
    let mut m = zeros(dim);
    m.slice_mut(ndarray::s![..n, ..n]).assign(a);
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(d: usize) -> FockSpace {
        FockSpace::new(d).unwrap()
    }

    #[test]
    fn annihilation_dim2() {
        let a = annihilation(space(2));
        assert_eq!(a[[0, 1]], ONE);
        assert_eq!(a[[0, 0]] + a[[1, 0]] + a[[1, 1]], ZERO);
    }

    #[test]
    fn number_from_ladder() {
        let s = space(3);
        let n = creation(s).dot(&annihilation(s));
        assert!(max_abs(&(n - diag_real(&[0.0, 1.0, 2.0]))) < 1e-15);
    }

    #[test]
    fn truncated_commutator() {
        let s = space(5);
        let a = annihilation(s);
        let c = commutator(&a, &creation(s));
        // √n·√n is exact only up to one rounding
        assert!(max_abs(&(c - diag_real(&[1.0, 1.0, 1.0, 1.0, -4.0]))) < 1e-15);
    }

    #[test]
    fn rejects_tiny_space() {
        assert!(matches!(FockSpace::new(1), Err(Error::InvalidSpace(_))));
    }

    #[test]
    fn kerr_examples() {
        assert_eq!(kerr(space(4), 1.0), diag_real(&[0.0, 0.0, 1.0, 3.0]));
        assert_eq!(kerr(space(2), 2.7), zeros(2));
        assert_eq!(kerr(space(3), -1.0), diag_real(&[0.0, 0.0, -1.0]));
    }

    #[test]
    fn projector_examples() {
        assert_eq!(projector(space(4), 1).unwrap(), diag_real(&[1.0, 1.0, 0.0, 0.0]));
        assert_eq!(projector(space(3), 2).unwrap(), identity(3));
        assert!(projector(space(3), 3).is_err());
        for r in 0..6 {
            let p = projector(space(6), r).unwrap();
            assert_eq!(p.dot(&p), p);
        }
    }

    #[test]
    fn require_above_checks_levels() {
        assert!(space(4).require_above(2, 1).is_ok());
        assert!(space(4).require_above(2, 2).is_err());
    }
}
