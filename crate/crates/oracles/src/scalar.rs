//! Scalar shrinkage oracle for capped-ℓ1, LSP and MCP.

use nnfn_core::regularizers::{prox_scalar, RegularizerKind, RegularizerSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::SuiteReport;

/// Grid points laid over `[0, |s|]` before refinement.
pub const GRID_POINTS: usize = 20_001;
/// Agreement tolerance on the minimizer.
pub const TOL: f64 = 1e-6;
/// Relative slack under which a different point counts as a co-minimizer.
pub const OBJECTIVE_SLACK: f64 = 1e-12;

/// Penalty `p(x)` for `x ≥ 0`, written out from the definitions.
pub fn penalty(kind: RegularizerKind, lambda: f64, theta: f64, x: f64) -> f64 {
    match kind {
        RegularizerKind::CappedL1 => {
            if x < theta {
                x
            } else {
                theta
            }
        }
        RegularizerKind::Lsp => (1.0 + x / theta).ln(),
        RegularizerKind::Mcp => {
            let a = theta * lambda;
            if x <= a {
                x - x * x / (2.0 * a)
            } else {
                a / 2.0
            }
        }
        RegularizerKind::Nuclear | RegularizerKind::Nnfn => x,
    }
}

/// `½(x − |s|)² + λ·p(x)`.
pub fn objective(kind: RegularizerKind, lambda: f64, theta: f64, s: f64, x: f64) -> f64 {
    0.5 * (x - s.abs()).powi(2) + lambda * penalty(kind, lambda, theta, x)
}

/// Minimizer of [`objective`] by a uniform grid over `[0, |s|]` followed by
/// golden-section refinement around the best grid point, with the sign of
/// `s` restored.
///
/// The penalty is nondecreasing, so no minimizer lies outside `[0, |s|]`.
pub fn brute_prox_scalar(kind: RegularizerKind, lambda: f64, theta: f64, s: f64) -> f64 {
    let a = s.abs();
    if a == 0.0 {
        return 0.0;
    }
    let f = |x: f64| objective(kind, lambda, theta, s, x);
    let h = a / (GRID_POINTS - 1) as f64;
    let (mut bi, mut bf) = (0, f(0.0));
    for i in 1..GRID_POINTS {
        let v = f(i as f64 * h);
        if v < bf {
            (bi, bf) = (i, v);
        }
    }
    let lo = (bi as f64 - 1.0).max(0.0) * h;
    let hi = ((bi + 1) as f64 * h).min(a);
    let x = golden(f, lo, hi);
    // kinks and endpoints are exact candidates that grid + golden section
    // can only approach, so they go first and win ties
    let mut probes = vec![0.0, a];
    if kind == RegularizerKind::CappedL1 {
        probes.push(theta.min(a));
    }
    if kind == RegularizerKind::Mcp {
        probes.push((theta * lambda).min(a));
    }
    probes.push(x);
    probes.push(bi as f64 * h);
    let mut best = (f64::INFINITY, 0.0);
    for p in probes {
        let v = f(p);
        if v < best.0 {
            best = (v, p);
        }
    }
    s.signum() * best.1
}

fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
        if fc <= fd {
            hi = d;
            (d, fd) = (c, fc);
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            (c, fc) = (d, fd);
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Whether `got` agrees with the brute-force minimizer: within [`TOL`], or
/// at least as good by objective value up to [`OBJECTIVE_SLACK`].
pub fn agrees(kind: RegularizerKind, lambda: f64, theta: f64, s: f64, got: f64) -> (bool, f64) {
    let want = brute_prox_scalar(kind, lambda, theta, s);
    let gap = (got - want).abs();
    if gap <= TOL {
        return (true, gap);
    }
    if got.signum() * s.signum() < 0.0 && got != 0.0 {
        return (false, gap);
    }
    let fg = objective(kind, lambda, theta, s, got.abs());
    let fw = objective(kind, lambda, theta, s, want.abs());
    (fg <= fw + OBJECTIVE_SLACK * fw.abs().max(1.0), gap)
}

/// Random `(λ, θ, s)` cases for one kind against `prox_scalar`.
pub fn prox_scalar_suite(kind: RegularizerKind, cases: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005c_a1a4 ^ kind as u64);
    let mut report = SuiteReport::new(format!("prox_scalar[{kind}] vs brute force"));
    for _ in 0..cases {
        let lambda = 10f64.powf(rng.random_range(-2.0..0.7));
        let theta = 10f64.powf(rng.random_range(-1.0..1.0));
        let s = rng.random_range(-10.0..10.0);
        let got = RegularizerSpec::new(kind, lambda, Some(theta)).and_then(|spec| prox_scalar(&spec, s));
        match got {
            Ok(x) => {
                let (ok, gap) = agrees(kind, lambda, theta, s, x);
                report.record(gap, ok, || format!("λ={lambda} θ={theta} s={s} got {x}"));
            }
            Err(e) => report.record(f64::INFINITY, false, || format!("λ={lambda} θ={theta} s={s}: {e}")),
        }
    }
    report
}
