#![allow(dead_code)]

use snse::spectral::{Basis, Parity};

/// Average over the torus of `T1(k1·x) T2(k2·x) T3(k3·x)` where each `T` is
/// given as exponential coefficients `(c_plus, c_minus)` of `e^{±ik·x}`.
fn triple_average(k: [(i32, i32); 3], c: [[(f64, f64); 2]; 3]) -> f64 {
    // complex arithmetic by hand: each trig factor has coefficients in C
    let mut re = 0.0;
    let mut im = 0.0;
    for s1 in 0..2 {
        for s2 in 0..2 {
            for s3 in 0..2 {
                let sg = |s: usize| if s == 0 { 1 } else { -1 };
                let kx = sg(s1) * k[0].0 + sg(s2) * k[1].0 + sg(s3) * k[2].0;
                let ky = sg(s1) * k[0].1 + sg(s2) * k[1].1 + sg(s3) * k[2].1;
                if kx != 0 || ky != 0 {
                    continue;
                }
                let (a, b) = c[0][s1];
                let (cc, d) = c[1][s2];
                let (e, f) = c[2][s3];
                let (r1, i1) = (a * cc - b * d, a * d + b * cc);
                re += r1 * e - i1 * f;
                im += r1 * f + i1 * e;
            }
        }
    }
    assert!(im.abs() < 1e-14);
    re
}

/// Exponential coefficients of cos (`deriv=false`) or sin, or of their derivatives.
fn trig_coeffs(parity: Parity, deriv: bool) -> [(f64, f64); 2] {
    // cos = (e^{+} + e^{-})/2 ; sin = (e^{+} - e^{-})/(2i) = -i/2 e^{+} + i/2 e^{-}
    let cos = [(0.5, 0.0), (0.5, 0.0)];
    let sin = [(0.0, -0.5), (0.0, 0.5)];
    let neg = |c: [(f64, f64); 2]| [(-c[0].0, -c[0].1), (-c[1].0, -c[1].1)];
    match (parity, deriv) {
        (Parity::Cos, false) => cos,
        (Parity::Sin, false) => sin,
        (Parity::Cos, true) => neg(sin),
        (Parity::Sin, true) => cos,
    }
}

/// Dense tensor `t[(p*d + q)*d + r] = b(e_p, e_q, e_r)` from analytic averages.
pub fn oracle_tensor(basis: &Basis) -> Vec<f64> {
    let d = basis.dim();
    let modes = basis.modes();
    let unit = |i: usize| {
        let k = modes[i].k;
        let n = ((k.kx * k.kx + k.ky * k.ky) as f64).sqrt();
        (-(k.ky as f64) / n, k.kx as f64 / n)
    };
    let mut t = vec![0.0; d * d * d];
    for p in 0..d {
        let ap = unit(p);
        for q in 0..d {
            let aq = unit(q);
            let kq = modes[q].k;
            let apk = ap.0 * kq.kx as f64 + ap.1 * kq.ky as f64;
            if apk == 0.0 {
                continue;
            }
            for r in 0..d {
                let ar = unit(r);
                let aqar = aq.0 * ar.0 + aq.1 * ar.1;
                if aqar.abs() < 1e-15 {
                    continue;
                }
                let kp = modes[p].k;
                let kr = modes[r].k;
                let avg = triple_average(
                    [(kp.kx, kp.ky), (kq.kx, kq.ky), (kr.kx, kr.ky)],
                    [
                        trig_coeffs(modes[p].parity, false),
                        trig_coeffs(modes[q].parity, true),
                        trig_coeffs(modes[r].parity, false),
                    ],
                );
                t[(p * d + q) * d + r] = 2.0 * 2f64.sqrt() * apk * aqar * avg;
            }
        }
    }
    t
}

/// `b(u, v, e_r)` for every `r` from the dense oracle tensor.
pub fn oracle_project(t: &[f64], d: usize, u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for p in 0..d {
        if u[p] == 0.0 {
            continue;
        }
        for q in 0..d {
            let w = u[p] * v[q];
            if w == 0.0 {
                continue;
            }
            let row = &t[(p * d + q) * d..(p * d + q + 1) * d];
            for (o, x) in out.iter_mut().zip(row) {
                *o += w * x;
            }
        }
    }
    out
}
