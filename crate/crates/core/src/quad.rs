// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

//! Adaptive Gauss–Kronrod (7/15) quadrature for complex scalar integrands.

use crate::fock::C64;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Integral estimate and Kronrod–Gauss difference on [a, b].
fn gk15<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += s * WGK[j];
        if j % 2 == 1 {
            g += s * WG[j / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// ∫_a^b f with absolute tolerance `tol`. Kinks and jumps should be passed
/// as `breaks` so that each smooth piece is integrated separately.
pub fn integrate<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> C64 {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    pts.sort_by(|x, y| x.total_cmp(y));
    let per = tol / (pts.len() - 1) as f64;
    pts.windows(2).map(|w| adapt(&f, w[0], w[1], per, 0)).sum()
}

fn adapt<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> C64 {
    let (val, err) = gk15(f, a, b);
    if err <= tol.max(1e-15 * val.norm()) || depth >= 40 {
        return val;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth + 1) + adapt(f, m, b, 0.5 * tol, depth + 1)
}

/// Gauss–Legendre nodes and weights on [a, b] for `n` ∈ {3, 5}.
pub fn gauss_legendre(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let (x, w): (&[f64], &[f64]) = match n {
        3 => (
            &[-0.774596669241483377, 0.0, 0.774596669241483377],
            &[5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0],
        ),
        _ => (
            &[
                -0.906179845938663993,
                -0.538469310105683091,
                0.0,
                0.538469310105683091,
                0.906179845938663993,
            ],
            &[
                0.236926885056189088,
                0.478628670499366468,
                0.568888888888888889,
                0.478628670499366468,
                0.236926885056189088,
            ],
        ),
    };
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    x.iter().zip(w).map(|(&xi, &wi)| (c + h * xi, h * wi)).collect()
}
