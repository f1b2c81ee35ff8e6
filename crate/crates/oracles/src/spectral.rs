//! Oracles for the matrix prox and the shape of spectral shrinkage.

use nalgebra::DMatrix;
use nnfn_core::regularizers::{prox_nnfn, shrink_spectrum, RegularizerKind, RegularizerSpec};
use nnfn_core::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::SuiteReport;

/// Perturbations per scale in the local-optimality probe.
pub const PROBE_PERTURBATIONS: usize = 200;
/// Perturbation sizes relative to `‖X̂‖_F + 1`.
pub const PROBE_SCALES: [f64; 3] = [1e-1, 1e-2, 1e-3];
/// Relative objective slack allowed by the probe.
pub const PROBE_SLACK: f64 = 1e-10;

pub fn to_nalgebra(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j))
}

pub fn from_nalgebra(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `½‖X − Z‖_F² + λ(‖X‖_* − ‖X‖_F)`, with the spectrum from nalgebra.
pub fn nnfn_prox_objective(z: &DMatrix<f64>, lambda: f64, x: &DMatrix<f64>) -> f64 {
    let sigma = x.singular_values();
    let nuclear: f64 = sigma.iter().sum();
    0.5 * (x - z).norm_squared() + lambda * (nuclear - x.norm())
}

/// Largest amount by which a probed point beats `x_hat` on the prox
/// objective, relative to `max(1, |f(x_hat)|)`. Probes are `Z` itself and
/// [`PROBE_PERTURBATIONS`] random directions at each of [`PROBE_SCALES`].
/// A value `≤ PROBE_SLACK` passes.
pub fn local_optimality_probe(
    z: &DMatrix<f64>,
    lambda: f64,
    x_hat: &DMatrix<f64>,
    rng: &mut impl Rng,
) -> f64 {
    let f0 = nnfn_prox_objective(z, lambda, x_hat);
    let denom = f0.abs().max(1.0);
    let mut worst = (f0 - nnfn_prox_objective(z, lambda, z)) / denom;
    let radius = x_hat.norm() + 1.0;
    for scale in PROBE_SCALES {
        for _ in 0..PROBE_PERTURBATIONS {
            let e = DMatrix::<f64>::from_fn(z.nrows(), z.ncols(), |_, _| StandardNormal.sample(rng));
            let e = e.clone() * (scale * radius / e.norm().max(f64::MIN_POSITIVE));
            let f = nnfn_prox_objective(z, lambda, &(x_hat + e));
            worst = worst.max((f0 - f) / denom);
        }
    }
    worst
}

/// Random matrices between 2×2 and 6×6, with λ spanning both sides of
/// `σ₁(Z)`, against `prox_nnfn`.
pub fn prox_nnfn_suite(matrices: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a0b);
    let mut report = SuiteReport::new("prox_nnfn local-optimality probe");
    for _ in 0..matrices {
        let (m, n) = (rng.random_range(2..=6), rng.random_range(2..=6));
        let scale = 10f64.powf(rng.random_range(-0.5..1.0));
        let z = DMatrix::<f64>::from_fn(m, n, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            scale * v
        });
        let top = z.singular_values().max();
        let lambda = top * rng.random_range(0.02..1.5);
        match prox_nnfn(&from_nalgebra(&z), lambda) {
            Ok(x) => {
                let worst = local_optimality_probe(&z, lambda, &to_nalgebra(&x), &mut rng);
                report.record(worst, worst <= PROBE_SLACK, || {
                    format!("{m}x{n} λ={lambda}: a probe improves the objective by {worst:e}")
                });
            }
            Err(e) => report.record(f64::INFINITY, false, || format!("{m}x{n} λ={lambda}: {e}")),
        }
    }
    report
}

/// Slack for the shrinkage inequalities, relative to `σ₁`.
pub const SHRINK_SLACK: f64 = 1e-12;

/// Checks one spectrum; returns the largest violation (relative to `σ₁`)
/// and a description of the first failed property.
///
/// * every kind: `0 ≤ σ̃_i ≤ σ_i`;
/// * nuclear: `σ_i − σ̃_i = min(λ, σ_i)`;
/// * other kinds: `σ_i − σ̃_i ≤ σ_{i+1} − σ̃_{i+1}` for each pair whose
///   outputs are both positive;
/// * NNFN and LSP: when some such pair has distinct inputs, at least one
///   pair is strict.
pub fn check_shrinkage(spec: &RegularizerSpec, sigma: &[f64], shrunk: &[f64]) -> (f64, Option<String>) {
    let top = sigma.first().copied().unwrap_or(0.0).max(1.0);
    let tol = SHRINK_SLACK * top;
    let mut worst: f64 = 0.0;
    let mut failure = None;
    let mut fail = |amount: f64, msg: String, failure: &mut Option<String>| {
        worst = worst.max(amount / top);
        if amount > tol && failure.is_none() {
            *failure = Some(msg);
        }
    };
    for (i, (&s, &t)) in sigma.iter().zip(shrunk).enumerate() {
        fail(-t, format!("σ̃_{i} = {t} < 0"), &mut failure);
        fail(t - s, format!("σ̃_{i} = {t} > σ_{i} = {s}"), &mut failure);
        if spec.kind == RegularizerKind::Nuclear {
            let want = spec.lambda.min(s);
            fail((s - t - want).abs(), format!("shrinkage {} at σ_{i} = {s}, want {want}", s - t), &mut failure);
        }
    }
    if spec.kind == RegularizerKind::Nuclear {
        return (worst, failure);
    }
    let active: Vec<usize> = (0..sigma.len().saturating_sub(1))
        .filter(|&i| shrunk[i] > 0.0 && shrunk[i + 1] > 0.0)
        .collect();
    let mut strict = false;
    let mut distinct = false;
    for &i in &active {
        let (di, dn) = (sigma[i] - shrunk[i], sigma[i + 1] - shrunk[i + 1]);
        fail(di - dn, format!("shrinkage {di} at σ_{i} exceeds {dn} at σ_{}", i + 1), &mut failure);
        distinct |= sigma[i] - sigma[i + 1] > 1e-6 * top;
        strict |= dn > di;
    }
    let needs_strict = matches!(spec.kind, RegularizerKind::Nnfn | RegularizerKind::Lsp);
    if needs_strict && distinct && !strict {
        worst = worst.max(f64::INFINITY);
        if failure.is_none() {
            failure = Some("no strict adaptivity on distinct singular values".into());
        }
    }
    (worst, failure)
}

/// Random non-increasing spectra of length 1–8 through `shrink_spectrum`.
pub fn shrinkage_suite(kind: RegularizerKind, cases: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5421 ^ ((kind as u64) << 8));
    let mut report = SuiteReport::new(format!("adaptive shrinkage[{kind}]"));
    for _ in 0..cases {
        let n = rng.random_range(1..=8);
        let scale = 10f64.powf(rng.random_range(-1.0..1.5));
        let mut sigma: Vec<f64> = (0..n).map(|_| scale * rng.random_range(0.0..1.0)).collect();
        sigma.sort_by(|a, b| b.total_cmp(a));
        let lambda = scale * 10f64.powf(rng.random_range(-2.0..0.3));
        let theta = kind
            .uses_theta()
            .then(|| 10f64.powf(rng.random_range(-1.0..1.0)) * if kind == RegularizerKind::Mcp { 1.0 } else { scale });
        let result = RegularizerSpec::new(kind, lambda, theta)
            .and_then(|spec| shrink_spectrum(&spec, lambda, &sigma).map(|t| (spec, t)));
        match result {
            Ok((spec, shrunk)) => {
                let (worst, failure) = check_shrinkage(&spec, &sigma, &shrunk);
                let ok = failure.is_none();
                report.record(worst, ok, || {
                    format!("σ={sigma:?} λ={lambda} θ={theta:?} → {shrunk:?}: {}", failure.unwrap_or_default())
                });
            }
            Err(e) => report.record(f64::INFINITY, false, || format!("σ={sigma:?} λ={lambda}: {e}")),
        }
    }
    report
}
