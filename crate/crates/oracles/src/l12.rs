//! Brute-force minimizer of `½‖x − z‖² + λ(‖x‖₁ − ‖x‖₂)`.
//!
//! A minimizer never has a sign opposite to `z`, so the search runs over the
//! nonnegative orthant with `a = |z|`. There the objective reads
//! `½‖x − a‖² + λ·Σx − λ‖x‖₂`: a smooth quadratic plus a concave term.
//! Projected gradient from many starts finds the basin; Newton's method on
//! the support polishes the answer to machine precision.

use nalgebra::{DMatrix, DVector};
use nnfn_core::regularizers::prox_l12;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::SuiteReport;

/// Per-coordinate agreement tolerance.
pub const TOL: f64 = 1e-6;
/// Relative objective slack for accepting a co-minimizer.
pub const OBJECTIVE_SLACK: f64 = 1e-12;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// The prox objective at `x` (any signs).
pub fn objective(z: &[f64], lambda: f64, x: &[f64]) -> f64 {
    let fit: f64 = x.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum();
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    0.5 * fit + lambda * (l1 - norm(x))
}

fn orthant_objective(a: &[f64], lambda: f64, x: &[f64]) -> f64 {
    objective(a, lambda, x)
}

fn orthant_gradient(a: &[f64], lambda: f64, x: &[f64]) -> Vec<f64> {
    let r = norm(x);
    x.iter()
        .zip(a)
        .map(|(&xi, &ai)| {
            let concave = if r > 0.0 { lambda * xi / r } else { 0.0 };
            xi - ai + lambda - concave
        })
        .collect()
}

fn projected_descent(a: &[f64], lambda: f64, start: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> = start.iter().map(|v| v.max(0.0)).collect();
    let mut fx = orthant_objective(a, lambda, &x);
    let mut t = 1.0;
    for _ in 0..5000 {
        let g = orthant_gradient(a, lambda, &x);
        let accepted = loop {
            let xn: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| (xi - t * gi).max(0.0)).collect();
            let step_sq: f64 = xn.iter().zip(&x).map(|(p, q)| (p - q).powi(2)).sum();
            let fn_ = orthant_objective(a, lambda, &xn);
            if fn_ <= fx - 1e-4 / t * step_sq {
                break Some((xn, fn_, step_sq));
            }
            t *= 0.5;
            if t < 1e-20 {
                break None;
            }
        };
        let Some((xn, fn_, step_sq)) = accepted else {
            return x;
        };
        let done = step_sq.sqrt() <= 1e-15 * (1.0 + norm(&x));
        (x, fx) = (xn, fn_);
        if done {
            break;
        }
        t = (t * 2.0).min(1.0);
    }
    x
}

/// Newton iterations on the support of `x` with Hessian
/// `I − (λ/r)(I − x xᵀ/r²)`; each step must not increase the objective and
/// must keep the support positive.
fn newton_polish(a: &[f64], lambda: f64, mut x: Vec<f64>) -> Vec<f64> {
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0).collect();
    if support.is_empty() {
        return x;
    }
    let k = support.len();
    for _ in 0..30 {
        let r = norm(&x);
        let g = orthant_gradient(a, lambda, &x);
        let gs = DVector::from_iterator(k, support.iter().map(|&i| g[i]));
        let mut h = DMatrix::<f64>::identity(k, k) * (1.0 - lambda / r);
        for (p, &i) in support.iter().enumerate() {
            for (q, &j) in support.iter().enumerate() {
                h[(p, q)] += lambda * x[i] * x[j] / (r * r * r);
            }
        }
        let Some(d) = h.lu().solve(&gs) else {
            break;
        };
        let mut xn = x.clone();
        for (p, &i) in support.iter().enumerate() {
            xn[i] -= d[p];
        }
        if support.iter().any(|&i| xn[i] <= 0.0) {
            break;
        }
        let (f0, f1) = (orthant_objective(a, lambda, &x), orthant_objective(a, lambda, &xn));
        if f1 > f0 + 1e-15 * f0.abs().max(1.0) {
            break;
        }
        let moved = d.norm();
        x = xn;
        if moved <= 1e-16 * (1.0 + r) {
            break;
        }
    }
    x
}

/// Global minimizer of the ℓ1-2 prox objective by multi-start search.
///
/// Intended for short vectors (length ≤ 6). Starts: `|z|`, its
/// soft-threshold, each 1-sparse vector `|z_i|·e_i` and a few seeded random
/// points.
pub fn brute_prox_l12(z: &[f64], lambda: f64) -> Vec<f64> {
    let n = z.len();
    let a: Vec<f64> = z.iter().map(|v| v.abs()).collect();
    let amax = a.iter().cloned().fold(0.0, f64::max);
    let mut starts = vec![a.clone(), a.iter().map(|v| (v - lambda).max(0.0)).collect()];
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = a[i];
        starts.push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x0b_f0_12);
    for _ in 0..8 {
        starts.push((0..n).map(|_| rng.random_range(0.0..=amax.max(1e-12))).collect());
    }

    let mut best = (orthant_objective(&a, lambda, &vec![0.0; n]), vec![0.0; n]);
    for s in starts {
        let x = newton_polish(&a, lambda, projected_descent(&a, lambda, &s));
        let f = orthant_objective(&a, lambda, &x);
        if f < best.0 {
            best = (f, x);
        }
    }
    best.1.iter().zip(z).map(|(x, zi)| x * zi.signum()).collect()
}

/// Whether `got` agrees with the brute-force minimizer coordinatewise within
/// [`TOL`], or is at least as good by objective value.
pub fn agrees(z: &[f64], lambda: f64, got: &[f64]) -> (bool, f64) {
    let want = brute_prox_l12(z, lambda);
    let gap = got
        .iter()
        .zip(&want)
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max);
    if got.len() == want.len() && gap <= TOL {
        return (true, gap);
    }
    let (fg, fw) = (objective(z, lambda, got), objective(z, lambda, &want));
    (got.len() == want.len() && fg <= fw + OBJECTIVE_SLACK * fw.abs().max(1.0), gap)
}

/// Random vectors of length 1–5 with `λ ∈ [0.01, 2‖z‖∞]` against
/// `prox_l12`.
pub fn prox_l12_suite(cases: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x112);
    let mut report = SuiteReport::new("prox_l12 vs brute force");
    for _ in 0..cases {
        let n = rng.random_range(1..=5);
        let scale = 10f64.powf(rng.random_range(-1.0..1.0));
        let z: Vec<f64> = (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let zmax = z.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let hi = (2.0 * zmax).max(0.011);
        let lambda = rng.random_range(0.01..hi);
        match prox_l12(&z, lambda) {
            Ok(x) => {
                let (ok, gap) = agrees(&z, lambda, &x);
                report.record(gap, ok, || format!("z={z:?} λ={lambda} got {x:?}"));
            }
            Err(e) => report.record(f64::INFINITY, false, || format!("z={z:?} λ={lambda}: {e}")),
        }
    }
    report
}
