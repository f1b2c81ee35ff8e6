//! Experiment configuration.
//!
//! The file format is flat TOML: every setting is a top-level key written in
//! kebab-case, and grid axes are arrays. Each key can also be overridden
//! from the command line as `--<key> <value>`, where list values are
//! comma-separated.
//!
//! ```toml
//! data = "synthetic"
//! m = 500
//! solver = "factored"
//! reg = "nnfn"
//! lambda = [0.1, 1.0, 10.0]
//! step = [0.001]
//! rank-k = [8, 16]
//! seed = [1, 2, 3, 4, 5]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricName, DEFAULT_RANK_TOL};
use crate::parallel::Exec;
use crate::regularizers::RegularizerKind;
use crate::solvers::DEFAULT_ZERO_GUARD;

/// Admissible λ range unless `allow-out-of-range` is set.
pub const LAMBDA_RANGE: (f64, f64) = (1e-3, 1e2);
/// Admissible stepsize range unless `allow-out-of-range` is set.
pub const STEP_RANGE: (f64, f64) = (1e-5, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Proximal,
    Factored,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Triplets,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,

    // synthetic data
    pub m: usize,
    pub k_star: usize,
    /// Standard deviation of the additive noise. The default is `√0.1`, a
    /// noise variance of 0.1.
    pub noise_std: f64,
    pub multiplier: f64,

    // triplet data
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triplets: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    pub one_based: bool,
    /// Train, validation and test fractions.
    pub split: Vec<f64>,

    pub solver: SolverKind,
    pub reg: RegularizerKind,

    // grid axes
    pub lambda: Vec<f64>,
    pub step: Vec<f64>,
    /// Factor width `k` for the factored solver; SVD rank cap for the
    /// proximal solver, where 0 means no cap.
    pub rank_k: Vec<usize>,
    pub theta: Vec<f64>,

    pub tol: f64,
    pub max_iters: usize,
    pub eval_every: usize,
    pub zero_guard_eps: f64,
    pub rank_tol: f64,
    pub seed: Vec<u64>,
    pub metric: MetricName,
    /// Refit the selected configuration on train ∪ validation before testing.
    pub refit: bool,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub laplacian: Option<PathBuf>,
    pub laplacian_weight: f64,

    pub out: PathBuf,
    pub exec: Exec,
    /// Skip the λ and stepsize range checks.
    pub allow_out_of_range: bool,
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| {
            let v = 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64);
            // trim representation noise such as 0.09999999999999999
            format!("{v:.12e}").parse().unwrap()
        })
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic,
            m: 500,
            k_star: 5,
            noise_std: 0.1f64.sqrt(),
            multiplier: 1.0,
            triplets: None,
            rows: None,
            cols: None,
            one_based: true,
            split: vec![0.5, 0.25, 0.25],
            solver: SolverKind::Factored,
            reg: RegularizerKind::Nnfn,
            lambda: log_grid(LAMBDA_RANGE.0, LAMBDA_RANGE.1, 6),
            step: log_grid(STEP_RANGE.0, STEP_RANGE.1, 6),
            rank_k: vec![1, 2, 5, 10, 20, 50],
            theta: log_grid(0.1, 100.0, 6),
            tol: 1e-4,
            max_iters: 10_000,
            eval_every: 1,
            zero_guard_eps: DEFAULT_ZERO_GUARD,
            rank_tol: DEFAULT_RANK_TOL,
            seed: vec![1, 2, 3, 4, 5],
            metric: MetricName::Nmse,
            refit: true,
            laplacian: None,
            laplacian_weight: 0.0,
            out: PathBuf::from("out"),
            exec: Exec::default(),
            allow_out_of_range: false,
        }
    }
}

/// Keys whose values are lists; a scalar override is split on commas.
const LIST_KEYS: [&str; 6] = ["lambda", "step", "rank-k", "theta", "seed", "split"];

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config("<file>", e.message()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Overrides one key with a command-line value.
    ///
    /// The value is read as a TOML literal when possible and as a bare string
    /// otherwise, so `--reg nnfn` and `--lambda 0.1,1` both work.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim_start_matches("--").replace('_', "-");
        let mut table = toml::Table::try_from(&*self).expect("config serializes");
        let parsed = if LIST_KEYS.contains(&key.as_str()) {
            let items = value
                .trim_matches(|c| c == '[' || c == ']')
                .split(',')
                .map(|s| parse_literal(s.trim()))
                .collect();
            toml::Value::Array(items)
        } else {
            parse_literal(value)
        };
        table.insert(key.clone(), parsed);
        *self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(key, e.message()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                Err(Error::config(name, "grid axis is empty"))
            } else {
                Ok(())
            }
        };
        nonempty("lambda", self.lambda.len())?;
        nonempty("step", self.step.len())?;
        nonempty("seed", self.seed.len())?;
        nonempty("rank-k", self.rank_k.len())?;
        if self.solver == SolverKind::Factored {
            if self.rank_k.contains(&0) {
                return Err(Error::config("rank-k", "values must be >= 1"));
            }
            if self.reg.uses_theta() {
                return Err(Error::config(
                    "reg",
                    format!("factored solver supports nuclear and nnfn, not {}", self.reg),
                ));
            }
        }
        if self.reg.uses_theta() {
            nonempty("theta", self.theta.len())?;
            if self.theta.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
                return Err(Error::config("theta", "values must be > 0"));
            }
        }
        for &l in &self.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::config("lambda", format!("must be >= 0, got {l}")));
            }
            if !self.allow_out_of_range && !(LAMBDA_RANGE.0..=LAMBDA_RANGE.1).contains(&l) {
                return Err(Error::config(
                    "lambda",
                    format!("{l} outside [{}, {}]; set allow-out-of-range to permit", LAMBDA_RANGE.0, LAMBDA_RANGE.1),
                ));
            }
        }
        for &s in &self.step {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::config("step", format!("must be > 0, got {s}")));
            }
            if !self.allow_out_of_range && !(STEP_RANGE.0..=STEP_RANGE.1).contains(&s) {
                return Err(Error::config(
                    "step",
                    format!("{s} outside [{}, {}]; set allow-out-of-range to permit", STEP_RANGE.0, STEP_RANGE.1),
                ));
            }
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::config("tol", "must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max-iters", "must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval-every", "must be >= 1"));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(Error::config("rank-tol", "must lie in (0, 1)"));
        }
        if !(self.laplacian_weight >= 0.0 && self.laplacian_weight.is_finite()) {
            return Err(Error::config("laplacian-weight", "must be >= 0"));
        }
        if self.laplacian_weight > 0.0 && self.laplacian.is_none() {
            return Err(Error::config("laplacian", "required when laplacian-weight > 0"));
        }
        match self.data {
            DataSource::Synthetic => {
                if self.k_star == 0 || self.m < self.k_star {
                    return Err(Error::config("m", "need m >= k-star >= 1"));
                }
                if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
                    return Err(Error::config("noise-std", "must be >= 0"));
                }
                if !(self.multiplier > 0.0 && self.multiplier.is_finite()) {
                    return Err(Error::config("multiplier", "must be > 0"));
                }
                if self.metric != MetricName::Nmse {
                    return Err(Error::config("metric", "synthetic data is scored with nmse"));
                }
            }
            DataSource::Triplets => {
                if self.triplets.is_none() {
                    return Err(Error::config("triplets", "path required for triplet data"));
                }
                if self.split.len() != 3 {
                    return Err(Error::config("split", "expected three fractions"));
                }
                if self.split.iter().any(|&f| !(f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::config("split", "fractions must be >= 0 and sum to 1"));
                }
                if self.split[1] == 0.0 && self.grid_len() > 1 {
                    return Err(Error::config("split", "grid search needs a validation fraction"));
                }
                if self.split[2] == 0.0 {
                    return Err(Error::config("split", "test fraction must be > 0"));
                }
            }
        }
        Ok(())
    }

    /// Number of rows in the grid report.
    pub fn grid_len(&self) -> usize {
        let t = if self.reg.uses_theta() { self.theta.len() } else { 1 };
        self.lambda.len() * self.step.len() * self.rank_k.len() * t
    }
}

fn parse_literal(s: &str) -> toml::Value {
    format!("v = {s}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(s.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
        cfg.validate().unwrap();
    }

    #[test]
    fn default_grids_are_log_spaced() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.lambda, vec![1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0]);
        assert_eq!(cfg.step, vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0]);
        assert_eq!(cfg.grid_len(), 216);
    }

    #[test]
    fn overrides() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("reg", "nuclear").unwrap();
        cfg.set("--lambda", "0.5,2").unwrap();
        cfg.set("rank-k", "7").unwrap();
        cfg.set("solver", "proximal").unwrap();
        cfg.set("out", "/tmp/x").unwrap();
        assert_eq!(cfg.reg, RegularizerKind::Nuclear);
        assert_eq!(cfg.lambda, vec![0.5, 2.0]);
        assert_eq!(cfg.rank_k, vec![7]);
        assert_eq!(cfg.solver, SolverKind::Proximal);
        assert_eq!(cfg.out, PathBuf::from("/tmp/x"));
        assert!(cfg.set("no-such-key", "1").is_err());
        assert!(cfg.set("m", "abc").is_err());
    }

    #[test]
    fn validation_names_fields() {
        let mut cfg = ExperimentConfig::default();
        cfg.lambda = vec![1e3];
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "lambda"),
            other => panic!("{other:?}"),
        }
        cfg.allow_out_of_range = true;
        cfg.validate().unwrap();
        cfg.step.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.reg = RegularizerKind::Mcp;
        assert!(cfg.validate().is_err()); // factored solver
        cfg.solver = SolverKind::Proximal;
        cfg.validate().unwrap();
    }

    #[test]
    fn grid_len_collapses_axes() {
        let mut cfg = ExperimentConfig::default();
        cfg.lambda = vec![1.0, 2.0];
        cfg.step = vec![0.1];
        cfg.rank_k = vec![3, 4, 5];
        cfg.theta = vec![1.0, 2.0];
        assert_eq!(cfg.grid_len(), 6);
        cfg.reg = RegularizerKind::Lsp;
        cfg.solver = SolverKind::Proximal;
        assert_eq!(cfg.grid_len(), 12);
        cfg.rank_k = vec![0];
        cfg.validate().unwrap();
    }
}
