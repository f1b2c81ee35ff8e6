//! End-to-end experiments: data preparation, grid search over
//! hyperparameters, repeated runs across seeds and report emission.

mod config;
mod trace;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{build_laplacian, generate_synthetic, load_affinity, load_triplets, load_triplets_inferred, split_observations};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, EntrySource, FactorPair};
use crate::metrics::{self, EvalMask, EvaluationReport, MetricName, Spectrum};
use crate::observed::ObservedMatrix;
use crate::parallel::Exec;
use crate::regularizers::RegularizerSpec;
use crate::solvers::{solve_factored_with, solve_proximal_with, SolveStatus, SolveTrace, SolverConfig};

pub use config::{log_grid, DataSource, ExperimentConfig, SolverKind, LAMBDA_RANGE, STEP_RANGE};
pub use trace::{emit_trace, parse_trace_csv, read_trace, trace_to_csv, TRACE_HEADER};

/// A fitted model in whichever representation its solver produces.
#[derive(Clone, Debug)]
pub enum Model {
    Dense(DenseMatrix),
    Factored(FactorPair),
}

impl EntrySource for Model {
    fn shape(&self) -> (usize, usize) {
        match self {
            Model::Dense(x) => x.shape(),
            Model::Factored(fp) => fp.shape(),
        }
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            Model::Dense(x) => x.entry(i, j),
            Model::Factored(fp) => fp.entry(i, j),
        }
    }
}

impl Spectrum for Model {
    fn spectrum(&self) -> Result<Vec<f64>> {
        match self {
            Model::Dense(x) => x.spectrum(),
            Model::Factored(fp) => fp.spectrum(),
        }
    }
}

/// Runs the selected solver.
pub fn solve(
    solver: SolverKind,
    obs: &ObservedMatrix,
    cfg: &SolverConfig,
    validation: Option<&ObservedMatrix>,
    laplacian: Option<&DenseMatrix>,
) -> Result<(Model, SolveTrace)> {
    match solver {
        SolverKind::Proximal => {
            solve_proximal_with(obs, cfg, validation, laplacian).map(|(x, t)| (Model::Dense(x), t))
        }
        SolverKind::Factored => {
            solve_factored_with(obs, cfg, validation, laplacian).map(|(fp, t)| (Model::Factored(fp), t))
        }
    }
}

/// Held-out data a model is scored on.
#[derive(Clone, Debug)]
pub enum TestSet {
    /// Every position outside `observed`, compared with the noiseless truth.
    Unobserved {
        truth: DenseMatrix,
        observed: ObservedMatrix,
    },
    /// Held-out observed entries.
    Entries(ObservedMatrix),
}

impl TestSet {
    pub fn len(&self) -> usize {
        match self {
            TestSet::Unobserved { observed, .. } => EvalMask::Unobserved(observed).len(),
            TestSet::Entries(t) => t.nnz(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn evaluate(&self, model: &impl EntrySource, metric: MetricName) -> Result<f64> {
        match (self, metric) {
            (TestSet::Unobserved { truth, observed }, MetricName::Nmse) => {
                metrics::nmse(model, truth, EvalMask::Unobserved(observed))
            }
            (TestSet::Unobserved { .. }, MetricName::Rmse) => {
                Err(Error::config("metric", "synthetic data is scored with nmse"))
            }
            (TestSet::Entries(t), MetricName::Rmse) => metrics::rmse(model, t),
            (TestSet::Entries(t), MetricName::Nmse) => metrics::relative_error(model, t),
        }
    }
}

/// Train, validation and test data for one seed.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: ObservedMatrix,
    pub validation: ObservedMatrix,
    pub test: TestSet,
}

impl PreparedData {
    pub fn synthetic(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let inst = generate_synthetic(cfg.m, cfg.k_star, cfg.noise_std, cfg.multiplier, seed)?;
        let observed = inst.observed();
        Ok(Self {
            train: inst.train,
            validation: inst.validation,
            test: TestSet::Unobserved {
                truth: inst.ground_truth,
                observed,
            },
        })
    }

    pub fn split(obs: &ObservedMatrix, split: &[f64], seed: u64) -> Result<Self> {
        let (train, validation, test) = split_observations(obs, (split[0], split[1], split[2]), seed)?;
        Ok(Self {
            train,
            validation,
            test: TestSet::Entries(test),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.train.shape()
    }
}

/// One hyperparameter combination. `rank_k` is the factor width for the
/// factored solver and the SVD rank cap (0 for none) for the proximal one;
/// `theta` is absent for regularizers without a shape parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub step: f64,
    pub rank_k: usize,
    pub theta: Option<f64>,
}

impl GridPoint {
    pub fn solver_config(&self, cfg: &ExperimentConfig, seed: u64) -> Result<SolverConfig> {
        let regularizer = RegularizerSpec::new(cfg.reg, self.lambda, self.theta)?;
        let defaults = SolverConfig::default();
        let (rank_k, rank_cap) = match cfg.solver {
            SolverKind::Factored => (self.rank_k, None),
            SolverKind::Proximal => (defaults.rank_k, (self.rank_k > 0).then_some(self.rank_k)),
        };
        Ok(SolverConfig {
            regularizer,
            stepsize: self.step,
            max_iters: cfg.max_iters,
            rel_tol: cfg.tol,
            rank_k,
            rank_cap,
            seed,
            laplacian_weight: cfg.laplacian_weight,
            zero_guard_eps: cfg.zero_guard_eps,
            eval_every: cfg.eval_every,
            exec: cfg.exec,
            ..defaults
        })
    }
}

/// Grid points in report order: λ outermost, then stepsize, k and θ.
pub fn grid_points(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let thetas: Vec<Option<f64>> = if cfg.reg.uses_theta() {
        cfg.theta.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    let mut points = Vec::with_capacity(cfg.grid_len());
    for &lambda in &cfg.lambda {
        for &step in &cfg.step {
            for &rank_k in &cfg.rank_k {
                for &theta in &thetas {
                    points.push(GridPoint { lambda, step, rank_k, theta });
                }
            }
        }
    }
    points
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub point: GridPoint,
    pub status: Option<SolveStatus>,
    pub val_metric: Option<f64>,
    pub test_metric: Option<f64>,
    pub wall_time_s: f64,
    pub iterations: usize,
    pub error: Option<String>,
}

impl GridRow {
    fn usable(&self) -> Option<f64> {
        match self.status {
            Some(SolveStatus::NumericalFailure) | None => None,
            _ => self.val_metric.filter(|v| v.is_finite()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub rows: Vec<GridRow>,
    /// Index of the selected row.
    pub best: usize,
}

impl GridReport {
    pub fn best_row(&self) -> &GridRow {
        &self.rows[self.best]
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("lambda,step,rank_k,theta,status,val_metric,test_metric,wall_time_s,iterations\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.point.lambda,
                r.point.step,
                r.point.rank_k,
                opt(r.point.theta),
                r.status.map(|s| format!("{s:?}")).unwrap_or_else(|| "Error".into()),
                opt(r.val_metric),
                opt(r.test_metric),
                r.wall_time_s,
                r.iterations,
            );
        }
        out
    }
}

/// Fits every grid point on `data.train`, scores it on the validation set
/// and selects the minimizer.
///
/// Ties go to the smaller λ, then smaller k, then smaller stepsize. Points
/// run concurrently when `cfg.exec` is parallel; each solve is then
/// sequential internally and the report keeps grid order.
pub fn grid_search(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    laplacian: Option<&DenseMatrix>,
    seed: u64,
) -> Result<GridReport> {
    cfg.validate()?;
    if data.validation.is_empty() {
        return Err(Error::invalid("grid search needs a non-empty validation set"));
    }
    let points = grid_points(cfg);
    let (outer, inner) = if points.len() > 1 {
        (cfg.exec, Exec::Sequential)
    } else {
        (Exec::Sequential, cfg.exec)
    };
    let rows = outer.map(&points, |p| evaluate_point(cfg, data, laplacian, seed, p, inner));

    let best = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.usable().map(|v| (i, v)))
        .min_by(|(a, va), (b, vb)| {
            let (pa, pb) = (&rows[*a].point, &rows[*b].point);
            va.total_cmp(vb)
                .then(pa.lambda.total_cmp(&pb.lambda))
                .then(pa.rank_k.cmp(&pb.rank_k))
                .then(pa.step.total_cmp(&pb.step))
                .then(pa.theta.unwrap_or(0.0).total_cmp(&pb.theta.unwrap_or(0.0)))
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Numerical("every grid point failed".into()))?;
    Ok(GridReport { rows, best })
}

fn evaluate_point(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    laplacian: Option<&DenseMatrix>,
    seed: u64,
    point: &GridPoint,
    exec: Exec,
) -> GridRow {
    let mut row = GridRow {
        point: *point,
        status: None,
        val_metric: None,
        test_metric: None,
        wall_time_s: 0.0,
        iterations: 0,
        error: None,
    };
    let mut run = || -> Result<()> {
        let mut scfg = point.solver_config(cfg, seed)?;
        scfg.exec = exec;
        let (model, trace) = solve(cfg.solver, &data.train, &scfg, None, laplacian)?;
        row.status = Some(trace.status);
        row.wall_time_s = trace.wall_time_s();
        row.iterations = trace.iterations();
        if trace.status != SolveStatus::NumericalFailure {
            row.val_metric = Some(scfg.validation_metric.evaluate(&model, &data.validation)?);
            row.test_metric = data.test.evaluate(&model, cfg.metric).ok();
        }
        Ok(())
    };
    if let Err(e) = run() {
        row.error = Some(e.to_string());
    }
    row
}

/// Outcome of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub selected: Option<GridPoint>,
    pub status: Option<SolveStatus>,
    pub report: Option<EvaluationReport>,
    pub iterations: usize,
    pub refit: bool,
    pub trace_file: Option<PathBuf>,
    pub grid_file: Option<PathBuf>,
    pub error: Option<String>,
}

impl RunRecord {
    /// Test metric of a run that finished without numerical failure.
    pub fn metric(&self) -> Option<f64> {
        match self.status {
            Some(SolveStatus::NumericalFailure) | None => None,
            _ => self.report.as_ref().map(|r| r.value),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub metric: MetricName,
    pub runs: Vec<RunRecord>,
    /// Number of runs contributing to `mean` and `stddev`.
    pub completed: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation (n − 1 denominator; 0 for a single run).
    pub stddev: Option<f64>,
    pub mean_wall_time_s: Option<f64>,
}

impl ExperimentSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

/// Models from each seed, in seed order; `None` where the run failed.
pub struct ExperimentOutcome {
    pub summary: ExperimentSummary,
    pub models: Vec<Option<Model>>,
}

/// Loads the Laplacian named in the config, if any.
pub fn load_laplacian(cfg: &ExperimentConfig) -> Result<Option<DenseMatrix>> {
    match &cfg.laplacian {
        Some(path) if cfg.laplacian_weight > 0.0 => Ok(Some(build_laplacian(&load_affinity(path)?)?)),
        _ => Ok(None),
    }
}

/// For each seed: prepares data, selects hyperparameters on the validation
/// set when the grid has more than one point, refits if configured, scores
/// the model on held-out data and writes its trace.
///
/// Writes `trace_seed<seed>.csv`, `grid_seed<seed>.csv` (when searching) and
/// `summary.json` under `cfg.out`. A numerical failure is recorded in the
/// run's entry rather than aborting the batch.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let laplacian = load_laplacian(cfg)?;
    let triplets = match cfg.data {
        DataSource::Triplets => Some(load_configured_triplets(cfg)?),
        DataSource::Synthetic => None,
    };

    let mut runs = Vec::with_capacity(cfg.seed.len());
    let mut models = Vec::with_capacity(cfg.seed.len());
    for &seed in &cfg.seed {
        let data = match &triplets {
            Some(obs) => PreparedData::split(obs, &cfg.split, seed)?,
            None => PreparedData::synthetic(cfg, seed)?,
        };
        let (record, model) = run_seed(cfg, &data, laplacian.as_ref(), seed, &cfg.out);
        runs.push(record);
        models.push(model);
    }

    let metrics: Vec<f64> = runs.iter().filter_map(RunRecord::metric).collect();
    let walls: Vec<f64> = runs
        .iter()
        .filter(|r| r.metric().is_some())
        .filter_map(|r| r.report.as_ref().map(|x| x.wall_time_seconds))
        .collect();
    let stats = mean_std(&metrics);
    let summary = ExperimentSummary {
        config: cfg.clone(),
        metric: cfg.metric,
        completed: metrics.len(),
        mean: stats.map(|s| s.0),
        stddev: stats.map(|s| s.1),
        mean_wall_time_s: mean_std(&walls).map(|s| s.0),
        runs,
    };
    let path = cfg.out.join("summary.json");
    std::fs::write(&path, summary.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(ExperimentOutcome { summary, models })
}

/// Loads the triplet file named in the config, inferring the shape when
/// `rows`/`cols` are not both given.
pub fn load_configured_triplets(cfg: &ExperimentConfig) -> Result<ObservedMatrix> {
    let path = cfg
        .triplets
        .as_ref()
        .ok_or_else(|| Error::config("triplets", "path required for triplet data"))?;
    match (cfg.rows, cfg.cols) {
        (Some(r), Some(c)) => load_triplets(path, r, c, cfg.one_based),
        _ => load_triplets_inferred(path, cfg.one_based),
    }
}

fn run_seed(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    laplacian: Option<&DenseMatrix>,
    seed: u64,
    out: &Path,
) -> (RunRecord, Option<Model>) {
    let mut record = RunRecord {
        seed,
        selected: None,
        status: None,
        report: None,
        iterations: 0,
        refit: false,
        trace_file: None,
        grid_file: None,
        error: None,
    };
    let mut model = None;
    let mut run = || -> Result<()> {
        let point = if cfg.grid_len() > 1 {
            let report = grid_search(cfg, data, laplacian, seed)?;
            let path = out.join(format!("grid_seed{seed}.csv"));
            std::fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
            record.grid_file = Some(path);
            report.best_row().point
        } else {
            grid_points(cfg)[0]
        };
        record.selected = Some(point);

        let scfg = point.solver_config(cfg, seed)?;
        let refit = cfg.refit && !data.validation.is_empty();
        let (fit, trace) = if refit {
            let all = data.train.union(&data.validation)?;
            solve(cfg.solver, &all, &scfg, None, laplacian)?
        } else {
            let val = (!data.validation.is_empty()).then_some(&data.validation);
            solve(cfg.solver, &data.train, &scfg, val, laplacian)?
        };
        record.refit = refit;
        record.status = Some(trace.status);
        record.iterations = trace.iterations();
        let path = out.join(format!("trace_seed{seed}.csv"));
        emit_trace(&trace, &path)?;
        record.trace_file = Some(path);

        if trace.status != SolveStatus::NumericalFailure {
            record.report = Some(EvaluationReport {
                metric_name: cfg.metric,
                value: data.test.evaluate(&fit, cfg.metric)?,
                nnz_evaluated: data.test.len(),
                recovered_rank: metrics::numerical_rank(&fit, cfg.rank_tol)?,
                wall_time_seconds: trace.wall_time_s(),
            });
        }
        model = Some(fit);
        Ok(())
    };
    if let Err(e) = run() {
        record.error = Some(e.to_string());
    }
    (record, model)
}
