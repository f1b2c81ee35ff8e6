//! Proximal gradient over full matrices for any spectral regularizer.

use crate::error::{Error, Result};
use crate::linalg::{sparse_residual_with, DenseMatrix, WarmStart};
use crate::observed::ObservedMatrix;
use crate::parallel::Exec;
use crate::regularizers::{prox_spectral_step, prox_spectral_step_warm, regularizer_value, RegularizerSpec, SpectralProx};

use super::objective::{half_sq_norm, laplacian_term_unchecked, validate_laplacian, Iterate, LaplacianGradient};
use super::{check_inputs, relative_change, SolveStatus, SolveTrace, SolverClock, SolverConfig, TraceRecord};

/// One proximal step from `x_prev`: returns `Z = X − η·P_Ω(X − O)` and
/// `prox_{ηλ r}(Z)`.
pub fn proximal_step(
    x_prev: &DenseMatrix,
    obs: &ObservedMatrix,
    spec: &RegularizerSpec,
    stepsize: f64,
    rank_cap: Option<usize>,
) -> Result<(DenseMatrix, SpectralProx)> {
    let residual = sparse_residual_with(x_prev, obs, Exec::default())?;
    let z = gradient_step(x_prev, &residual, stepsize);
    let prox = prox_spectral_step(spec, stepsize * spec.lambda, &z, rank_cap, Exec::default())?;
    Ok((z, prox))
}

fn gradient_step(x: &DenseMatrix, residual: &ObservedMatrix, stepsize: f64) -> DenseMatrix {
    let mut z = x.clone();
    for (i, j, r) in residual.iter() {
        z.set(i, j, z.get(i, j) - stepsize * r);
    }
    z
}

pub fn solve_proximal(
    obs: &ObservedMatrix,
    cfg: &SolverConfig,
    validation: Option<&ObservedMatrix>,
) -> Result<(DenseMatrix, SolveTrace)> {
    solve_proximal_with(obs, cfg, validation, None)
}

/// Proximal algorithm starting from `X⁰ = 0`, with an optional graph
/// Laplacian term `laplacian_weight · Tr(Xᵀ L X)` added to the smooth part.
pub fn solve_proximal_with(
    obs: &ObservedMatrix,
    cfg: &SolverConfig,
    validation: Option<&ObservedMatrix>,
    laplacian: Option<&DenseMatrix>,
) -> Result<(DenseMatrix, SolveTrace)> {
    check_inputs(obs, cfg, validation)?;
    let laplacian = active_laplacian(obs, cfg, laplacian)?;
    let exec = cfg.exec;
    let spec = cfg.regularizer;
    let eta = cfg.stepsize;
    let (m, n) = obs.shape();

    let mut clock = SolverClock::start();
    let mut x = DenseMatrix::zeros(m, n);
    let mut residual = sparse_residual_with(&x, obs, exec)?;
    let mut objective = half_sq_norm(residual.values(), exec);
    let mut records = Vec::new();
    let mut status = SolveStatus::MaxIters;
    let mut warm = WarmStart::new();

    let record = |clock: &mut SolverClock, iter: usize, objective: f64, rank: usize, x: &DenseMatrix| {
        let val_error = if iter.is_multiple_of(cfg.eval_every) {
            match validation {
                Some(v) => clock.pause_during(|| cfg.validation_metric.evaluate(x, v)).ok(),
                None => None,
            }
        } else {
            None
        };
        TraceRecord {
            iter,
            objective,
            elapsed_s: clock.elapsed_s(),
            val_error,
            rank,
        }
    };
    records.push(record(&mut clock, 0, objective, 0, &x));

    for t in 1..=cfg.max_iters {
        let mut z = gradient_step(&x, &residual, eta);
        if let Some(l) = laplacian {
            if let (_, LaplacianGradient::Dense(g)) =
                laplacian_term_unchecked(Iterate::Dense(&x), l, cfg.laplacian_weight, exec)?
            {
                z.axpy(-eta, &g)?;
            }
        }
        let prox = match prox_spectral_step_warm(&spec, eta * spec.lambda, &z, cfg.rank_cap, &mut warm, exec) {
            Ok(p) => p,
            Err(Error::Numerical(_)) => {
                status = SolveStatus::NumericalFailure;
                break;
            }
            Err(e) => return Err(e),
        };
        x = prox.matrix;
        residual = sparse_residual_with(&x, obs, exec)?;
        let mut next = half_sq_norm(residual.values(), exec)
            + spec.lambda * regularizer_value(&spec, &prox.sigma)?;
        if let Some(l) = laplacian {
            next += laplacian_term_unchecked(Iterate::Dense(&x), l, cfg.laplacian_weight, exec)?.0;
        }
        let rank = prox.sigma.iter().filter(|&&s| s > 0.0).count();
        records.push(record(&mut clock, t, next, rank, &x));
        if !next.is_finite() {
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
    Ok((x, SolveTrace { records, status }))
}

pub(super) fn active_laplacian<'a>(
    obs: &ObservedMatrix,
    cfg: &SolverConfig,
    laplacian: Option<&'a DenseMatrix>,
) -> Result<Option<&'a DenseMatrix>> {
    match laplacian {
        Some(l) if cfg.laplacian_weight > 0.0 => {
            validate_laplacian(l, obs.rows())?;
            Ok(Some(l))
        }
        None if cfg.laplacian_weight > 0.0 => Err(Error::config(
            "laplacian_weight",
            "positive weight requires a Laplacian matrix",
        )),
        _ => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizers::RegularizerKind;

    fn rank_one_full(m: usize, n: usize) -> (DenseMatrix, ObservedMatrix) {
        let g = DenseMatrix::from_fn(m, n, |i, j| (1.0 + i as f64) * (0.5 - j as f64 * 0.3));
        let entries = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, g.get(i, j)))
            .collect();
        (g, ObservedMatrix::new(m, n, entries).unwrap())
    }

    #[test]
    fn zero_lambda_unit_step_recovers_observations() {
        let (g, obs) = rank_one_full(4, 3);
        let cfg = SolverConfig {
            regularizer: RegularizerSpec::nnfn(0.0).unwrap(),
            stepsize: 1.0,
            max_iters: 1,
            ..SolverConfig::default()
        };
        let (x, trace) = solve_proximal(&obs, &cfg, None).unwrap();
        assert!(x.sub(&g).unwrap().frobenius_norm() < 1e-10);
        assert_eq!(trace.records.len(), 2);
    }

    #[test]
    fn rank_one_recovery_with_nnfn() {
        let (g, obs) = rank_one_full(6, 5);
        let cfg = SolverConfig {
            regularizer: RegularizerSpec::nnfn(0.1).unwrap(),
            stepsize: 1.0,
            rel_tol: 1e-10,
            ..SolverConfig::default()
        };
        let (x, trace) = solve_proximal(&obs, &cfg, None).unwrap();
        let rel = x.sub(&g).unwrap().frobenius_norm() / g.frobenius_norm();
        assert!(rel < 1e-3, "{rel}");
        assert_eq!(trace.status, SolveStatus::Converged);
    }

    #[test]
    fn every_kind_runs() {
        let (_, obs) = rank_one_full(5, 4);
        for kind in RegularizerKind::ALL {
            let theta = kind.uses_theta().then_some(2.0);
            let cfg = SolverConfig {
                regularizer: RegularizerSpec::new(kind, 0.2, theta).unwrap(),
                max_iters: 50,
                ..SolverConfig::default()
            };
            let (_, trace) = solve_proximal(&obs, &cfg, Some(&obs)).unwrap();
            assert_ne!(trace.status, SolveStatus::NumericalFailure);
            assert!(trace.records.iter().all(|r| r.val_error.is_some()));
        }
    }

    #[test]
    fn rejects_empty_and_missing_laplacian() {
        let empty = ObservedMatrix::empty(3, 3).unwrap();
        assert!(solve_proximal(&empty, &SolverConfig::default(), None).is_err());
        let (_, obs) = rank_one_full(3, 3);
        let cfg = SolverConfig {
            laplacian_weight: 1.0,
            ..SolverConfig::default()
        };
        assert!(matches!(
            solve_proximal(&obs, &cfg, None),
            Err(Error::Config { .. })
        ));
    }
}
