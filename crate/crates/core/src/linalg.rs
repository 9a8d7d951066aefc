// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex linear algebra: matrix exponential (Padé scaling and
//! squaring), its Fréchet derivative, LU solves and a few helpers.

use nalgebra::DMatrix;
use ndarray::{s, Array2};

use crate::error::{Error, Result};
use crate::fock::{identity, zeros, Operator, C64};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Maximum absolute column sum.
pub fn norm1(a: &Operator) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// exp(A) by scaling and squaring with a diagonal Padé approximant.
pub fn matrix_exp(a: &Operator) -> Result<Operator> {
    if !a.is_square() {
        return Err(Error::Dimension("matrix_exp needs a square matrix".into()));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix_exp input"));
    }
    let n1 = norm1(a);
    for &(m, theta) in &THETA {
        if n1 <= theta {
            let b: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(a, b);
        }
    }
    let s = if n1 > THETA_13 {
        (n1 / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.mapv(|z| z * 0.5f64.powi(s));
    let mut x = pade13(&scaled)?;
    for _ in 0..s {
        x = x.dot(&x);
    }
    Ok(x)
}

fn pade_low(a: &Operator, b: &[f64]) -> Result<Operator> {
    let n = a.nrows();
    let a2 = a.dot(a);
    let mut u_inner = identity(n).mapv(|z| z * b[1]);
    let mut v = identity(n).mapv(|z| z * b[0]);
    let mut p = identity(n);
    for j in 1..b.len() / 2 {
        p = p.dot(&a2);
        u_inner.scaled_add(C64::from(b[2 * j + 1]), &p);
        v.scaled_add(C64::from(b[2 * j]), &p);
    }
    let u = a.dot(&u_inner);
    solve(&(&v - &u), &(&v + &u))
}

fn pade13(a: &Operator) -> Result<Operator> {
    let n = a.nrows();
    let b = &B13;
    let id = identity(n);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let c = |x: f64| C64::from(x);

    let mut t = a6.mapv(|z| z * b[13]);
    t.scaled_add(c(b[11]), &a4);
    t.scaled_add(c(b[9]), &a2);
    let mut u = a6.dot(&t);
    u.scaled_add(c(b[7]), &a6);
    u.scaled_add(c(b[5]), &a4);
    u.scaled_add(c(b[3]), &a2);
    u.scaled_add(c(b[1]), &id);
    let u = a.dot(&u);

    let mut t = a6.mapv(|z| z * b[12]);
    t.scaled_add(c(b[10]), &a4);
    t.scaled_add(c(b[8]), &a2);
    let mut v = a6.dot(&t);
    v.scaled_add(c(b[6]), &a6);
    v.scaled_add(c(b[4]), &a4);
    v.scaled_add(c(b[2]), &a2);
    v.scaled_add(c(b[0]), &id);

    solve(&(&v - &u), &(&v + &u))
}

/// Solves A X = B by LU with partial pivoting.
pub fn solve(a: &Operator, b: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n {
        return Err(Error::Dimension("solve: shape mismatch".into()));
    }
    let mut lu = a.to_owned();
    let mut x = b.to_owned();
    for k in 0..n {
        let mut p = k;
        let mut best = lu[[k, k]].norm();
        for i in k + 1..n {
            let v = lu[[i, k]].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::NonFinite("singular matrix in solve"));
        }
        if p != k {
            for j in 0..n {
                lu.swap([k, j], [p, j]);
            }
            for j in 0..x.ncols() {
                x.swap([k, j], [p, j]);
            }
        }
        let pivot = lu[[k, k]];
        for i in k + 1..n {
            let f = lu[[i, k]] / pivot;
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            lu[[i, k]] = f;
            for j in k + 1..n {
                let v = lu[[k, j]];
                lu[[i, j]] -= f * v;
            }
            for j in 0..x.ncols() {
                let v = x[[k, j]];
                x[[i, j]] -= f * v;
            }
        }
    }
    for k in (0..n).rev() {
        let pivot = lu[[k, k]];
        for j in 0..x.ncols() {
            let mut acc = x[[k, j]];
            for i in k + 1..n {
                acc -= lu[[k, i]] * x[[i, j]];
            }
            x[[k, j]] = acc / pivot;
        }
    }
    Ok(x)
}

/// exp(X) together with the Fréchet derivatives L(X, E_i) for every
/// direction, read off the block upper-triangular exponential
/// exp([[X, E_1, …, E_k], [0, X, 0, …], …]).
pub fn exp_with_derivatives(x: &Operator, dirs: &[Operator]) -> Result<(Operator, Vec<Operator>)> {
    let n = x.nrows();
    let k = dirs.len();
    let mut big = zeros(n * (k + 1));
    for b in 0..=k {
        big.slice_mut(s![b * n..(b + 1) * n, b * n..(b + 1) * n]).assign(x);
    }
    for (i, e) in dirs.iter().enumerate() {
        big.slice_mut(s![..n, (i + 1) * n..(i + 2) * n]).assign(e);
    }
    let eb = matrix_exp(&big)?;
    let ex = eb.slice(s![..n, ..n]).to_owned();
    let ls = (0..k)
        .map(|i| eb.slice(s![..n, (i + 1) * n..(i + 2) * n]).to_owned())
        .collect();
    Ok((ex, ls))
}

/// A^p by repeated squaring.
pub fn matrix_power(a: &Operator, mut p: u64) -> Operator {
    let mut result = identity(a.nrows());
    let mut base = a.clone();
    while p > 0 {
        if p & 1 == 1 {
            result = result.dot(&base);
        }
        p >>= 1;
        if p > 0 {
            base = base.dot(&base);
        }
    }
    result
}

pub fn kron(a: &Operator, b: &Operator) -> Operator {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc])
                .assign(&b.mapv(|z| z * aij));
        }
    }
    out
}

pub fn to_nalgebra(a: &Operator) -> DMatrix<C64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(h: &Operator) -> Vec<f64> {
    let herm = (h + &crate::fock::dagger(h)).mapv(|z| z * 0.5);
    let mut ev: Vec<f64> = to_nalgebra(&herm).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Singular values of a real matrix, descending.
pub fn singular_values(rows: usize, cols: usize, data: &[f64]) -> Vec<f64> {
    let m = DMatrix::from_row_slice(rows, cols, data);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}
