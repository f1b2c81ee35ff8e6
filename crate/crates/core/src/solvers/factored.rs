//! Gradient descent on the factored objective. No SVD of the iterate is ever
//! formed; the rank recorded in the trace comes from k×k factors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, FactorPair};
use crate::metrics::DEFAULT_RANK_TOL;
use crate::observed::ObservedMatrix;
use crate::regularizers::RegularizerKind;

use super::objective::{FactoredEval, FactoredOptions};
use super::proximal::active_laplacian;
use super::{
    check_inputs, relative_change, SolveStatus, SolveTrace, SolverClock, SolverConfig,
    TraceRecord, DIVERGENCE_PATIENCE,
};

/// `W⁰`, `H⁰` with i.i.d. `N(0, 1/k)` entries, `W` drawn first.
pub fn initial_factors(m: usize, n: usize, k: usize, seed: u64) -> FactorPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (1.0 / k as f64).sqrt()).expect("finite std");
    let w = DenseMatrix::from_fn(m, k, |_, _| normal.sample(&mut rng));
    let h = DenseMatrix::from_fn(n, k, |_, _| normal.sample(&mut rng));
    FactorPair { w, h }
}

pub fn solve_factored(
    obs: &ObservedMatrix,
    cfg: &SolverConfig,
    validation: Option<&ObservedMatrix>,
) -> Result<(FactorPair, SolveTrace)> {
    solve_factored_with(obs, cfg, validation, None)
}

/// Simultaneous gradient steps on `W` and `H`.
///
/// `Nnfn` minimizes `loss + (λ/2)(‖W‖² + ‖H‖²) − λ‖W·Hᵀ‖_F`; `Nuclear` drops
/// the Frobenius term, giving the factored nuclear norm.
pub fn solve_factored_with(
    obs: &ObservedMatrix,
    cfg: &SolverConfig,
    validation: Option<&ObservedMatrix>,
    laplacian: Option<&DenseMatrix>,
) -> Result<(FactorPair, SolveTrace)> {
    check_inputs(obs, cfg, validation)?;
    let kind = cfg.regularizer.kind;
    if !matches!(kind, RegularizerKind::Nnfn | RegularizerKind::Nuclear) {
        return Err(Error::UnsupportedRegularizer {
            kind: kind.name(),
            operation: "solve_factored",
        });
    }
    let laplacian = active_laplacian(obs, cfg, laplacian)?;
    let opts = FactoredOptions {
        zero_guard_eps: cfg.zero_guard_eps,
        exec: cfg.exec,
        laplacian: laplacian.map(|l| (l, cfg.laplacian_weight)),
        nuclear_only: kind == RegularizerKind::Nuclear,
    };
    let lambda = cfg.regularizer.lambda;
    let eta = cfg.stepsize;
    let (m, n) = obs.shape();

    let mut clock = SolverClock::start();
    let mut fp = initial_factors(m, n, cfg.rank_k, cfg.seed);
    let mut eval = FactoredEval::compute(&fp, obs, lambda, opts)?;
    let mut objective = eval.objective;
    let mut records = Vec::new();
    let mut status = SolveStatus::MaxIters;

    // rank is refreshed at evaluation points and carried forward in between
    let mut last_rank = cfg.rank_k;
    let mut record = |clock: &mut SolverClock, iter: usize, objective: f64, fp: &FactorPair| {
        let mut val_error = None;
        if iter.is_multiple_of(cfg.eval_every) {
            clock.pause_during(|| {
                val_error = validation.and_then(|v| cfg.validation_metric.evaluate(fp, v).ok());
                if let Ok(s) = fp.singular_values() {
                    last_rank = count_above(&s, DEFAULT_RANK_TOL);
                }
            });
        }
        let rank = last_rank;
        TraceRecord {
            iter,
            objective,
            elapsed_s: clock.elapsed_s(),
            val_error,
            rank,
        }
    };
    records.push(record(&mut clock, 0, objective, &fp));

    let mut increases = 0usize;
    for t in 1..=cfg.max_iters {
        fp.w.axpy(-eta, &eval.grad_w)?;
        fp.h.axpy(-eta, &eval.grad_h)?;
        eval = FactoredEval::compute(&fp, obs, lambda, opts)?;
        let next = eval.objective;
        records.push(record(&mut clock, t, next, &fp));
        if !next.is_finite() {
            status = SolveStatus::NumericalFailure;
            break;
        }
        increases = if next > objective { increases + 1 } else { 0 };
        if increases >= DIVERGENCE_PATIENCE {
            status = SolveStatus::NumericalFailure;
            break;
        }
        let change = relative_change(objective, next);
        objective = next;
        if change < cfg.rel_tol {
            status = SolveStatus::Converged;
            break;
        }
    }
    Ok((fp, SolveTrace { records, status }))
}

fn count_above(sigma: &[f64], rel_tol: f64) -> usize {
    let top = sigma.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    sigma.iter().filter(|&&s| s > rel_tol * top).count()
}
