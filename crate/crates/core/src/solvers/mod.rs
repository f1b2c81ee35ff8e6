//! Optimization drivers: the proximal algorithm over full matrices and
//! gradient descent on the factored objective.

mod factored;
mod objective;
mod proximal;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::EntrySource;
use crate::metrics;
use crate::observed::ObservedMatrix;
use crate::parallel::Exec;
use crate::regularizers::RegularizerSpec;

pub use crate::linalg::FactorPair;
pub use factored::{initial_factors, solve_factored, solve_factored_with};
pub use objective::{
    factored_gradients, factored_objective, full_objective, laplacian_term, loss_value,
    validate_laplacian, Iterate, LaplacianGradient, DEFAULT_ZERO_GUARD,
    LAPLACIAN_SYMMETRY_TOL,
};
pub use proximal::{proximal_step, solve_proximal, solve_proximal_with};

/// Consecutive objective increases after which the factored solver gives up.
pub const DIVERGENCE_PATIENCE: usize = 50;

/// Error measure recorded against the validation set while tracing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMetric {
    #[default]
    Rmse,
    /// `‖P(X − O)‖_F / ‖P(O)‖_F` on the validation entries.
    Nmse,
}

impl ValidationMetric {
    pub fn evaluate(self, x: &impl EntrySource, validation: &ObservedMatrix) -> Result<f64> {
        match self {
            ValidationMetric::Rmse => metrics::rmse(x, validation),
            ValidationMetric::Nmse => metrics::relative_error(x, validation),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub regularizer: RegularizerSpec,
    pub stepsize: f64,
    pub max_iters: usize,
    /// Stop when `|F_{t−1} − F_t| / max(1, |F_{t−1}|)` falls below this.
    pub rel_tol: f64,
    /// Inner dimension of the factored solver.
    pub rank_k: usize,
    /// Optional SVD truncation for the proximal solver.
    pub rank_cap: Option<usize>,
    pub seed: u64,
    pub laplacian_weight: f64,
    pub zero_guard_eps: f64,
    /// Validation error and rank are recorded every `eval_every` iterations.
    pub eval_every: usize,
    pub validation_metric: ValidationMetric,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            regularizer: RegularizerSpec::nnfn(1.0).expect("valid default"),
            stepsize: 1.0,
            max_iters: 10_000,
            rel_tol: 1e-4,
            rank_k: 10,
            rank_cap: None,
            seed: 0,
            laplacian_weight: 0.0,
            zero_guard_eps: DEFAULT_ZERO_GUARD,
            eval_every: 1,
            validation_metric: ValidationMetric::Rmse,
            exec: Exec::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be > 0, got {v}")))
            }
        };
        positive("stepsize", self.stepsize)?;
        positive("rel_tol", self.rel_tol)?;
        positive("zero_guard_eps", self.zero_guard_eps)?;
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be >= 1"));
        }
        if self.rank_k == 0 {
            return Err(Error::config("rank_k", "must be >= 1"));
        }
        if self.rank_cap == Some(0) {
            return Err(Error::config("rank_cap", "must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be >= 1"));
        }
        if !(self.laplacian_weight.is_finite() && self.laplacian_weight >= 0.0) {
            return Err(Error::config("laplacian_weight", "must be >= 0"));
        }
        // re-run the regularizer invariants in case fields were edited
        RegularizerSpec::new(
            self.regularizer.kind,
            self.regularizer.lambda,
            self.regularizer.theta,
        )
        .map_err(|e| Error::config("regularizer", e.to_string()))?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIters,
    NumericalFailure,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub elapsed_s: f64,
    pub val_error: Option<f64>,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    pub status: SolveStatus,
}

impl SolveTrace {
    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.objective)
    }

    pub fn wall_time_s(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.elapsed_s)
    }

    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn objectives(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.objective)
    }
}

/// Wall clock that can be paused while evaluation runs.
struct SolverClock {
    started: Instant,
    paused: Duration,
}

impl SolverClock {
    fn start() -> Self {
        Self {
            started: Instant::now(),
            paused: Duration::ZERO,
        }
    }

    fn elapsed_s(&self) -> f64 {
        (self.started.elapsed() - self.paused).as_secs_f64()
    }

    fn pause_during<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.paused += t.elapsed();
        out
    }
}

fn relative_change(prev: f64, next: f64) -> f64 {
    (prev - next).abs() / prev.abs().max(1.0)
}

fn check_inputs(
    obs: &ObservedMatrix,
    cfg: &SolverConfig,
    validation: Option<&ObservedMatrix>,
) -> Result<()> {
    cfg.validate()?;
    if obs.is_empty() {
        return Err(Error::invalid("no observed entries to fit"));
    }
    if let Some(v) = validation {
        if v.shape() != obs.shape() {
            return Err(Error::shape(format!(
                "validation {:?} vs training {:?}",
                v.shape(),
                obs.shape()
            )));
        }
    }
    Ok(())
}
