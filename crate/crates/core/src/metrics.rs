//! Recovery metrics: NMSE, RMSE and numerical rank.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{singular_values, DenseMatrix, EntrySource, FactorPair};
use crate::observed::ObservedMatrix;
use crate::parallel::Exec;

/// Default relative threshold `σ_i > tol·σ₁` for counting rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MetricName {
    Nmse,
    Rmse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metric_name: MetricName,
    pub value: f64,
    pub nnz_evaluated: usize,
    pub recovered_rank: usize,
    pub wall_time_seconds: f64,
}

/// Index set an error is measured on.
#[derive(Clone, Copy, Debug)]
pub enum EvalMask<'a> {
    /// Exactly the positions stored in the matrix.
    Entries(&'a ObservedMatrix),
    /// Every position *not* stored in the matrix.
    Unobserved(&'a ObservedMatrix),
}

impl EvalMask<'_> {
    fn shape(&self) -> (usize, usize) {
        match self {
            EvalMask::Entries(o) | EvalMask::Unobserved(o) => o.shape(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            EvalMask::Entries(o) => o.nnz(),
            EvalMask::Unobserved(o) => o.rows() * o.cols() - o.nnz(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Deterministic sum of `f(i, j)` over the mask.
    fn sum(&self, exec: Exec, f: impl Fn(usize, usize) -> f64 + Sync + Send) -> f64 {
        match *self {
            EvalMask::Entries(o) => {
                let (r, c) = (o.row_indices(), o.col_indices());
                exec.sum(o.nnz(), |e| f(r[e], c[e]))
            }
            EvalMask::Unobserved(o) => {
                let cols = o.col_indices();
                exec.sum(o.rows(), |i| {
                    let mut observed = cols[o.row_range(i)].iter().peekable();
                    let mut acc = 0.0;
                    for j in 0..o.cols() {
                        if observed.peek() == Some(&&j) {
                            observed.next();
                            continue;
                        }
                        acc += f(i, j);
                    }
                    acc
                })
            }
        }
    }
}

/// `‖P(X̄ − G)‖_F / ‖P(G)‖_F` over `mask`.
///
/// A ratio of norms, not of squared norms.
pub fn nmse(x_bar: &impl EntrySource, g: &impl EntrySource, mask: EvalMask<'_>) -> Result<f64> {
    if x_bar.shape() != mask.shape() || g.shape() != mask.shape() {
        return Err(Error::shape(format!(
            "estimate {:?}, truth {:?}, mask {:?}",
            x_bar.shape(),
            g.shape(),
            mask.shape()
        )));
    }
    if mask.is_empty() {
        return Err(Error::invalid("empty evaluation mask"));
    }
    let exec = Exec::default();
    let den = mask.sum(exec, |i, j| g.entry(i, j).powi(2));
    if den <= 0.0 {
        return Err(Error::invalid("ground truth is zero on the evaluation mask"));
    }
    let num = mask.sum(exec, |i, j| (x_bar.entry(i, j) - g.entry(i, j)).powi(2));
    Ok((num / den).sqrt())
}

/// `‖P(X − O)‖_F / ‖P(O)‖_F` on the stored entries of `obs`.
pub fn relative_error(x: &impl EntrySource, obs: &ObservedMatrix) -> Result<f64> {
    check_shape(x, obs)?;
    if obs.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let exec = Exec::default();
    let (r, c, v) = (obs.row_indices(), obs.col_indices(), obs.values());
    let den = exec.sum(obs.nnz(), |e| v[e] * v[e]);
    if den <= 0.0 {
        return Err(Error::invalid("observed values are all zero"));
    }
    let num = exec.sum(obs.nnz(), |e| (x.entry(r[e], c[e]) - v[e]).powi(2));
    Ok((num / den).sqrt())
}

/// Root mean squared error over the entries of `test`.
pub fn rmse(x_bar: &impl EntrySource, test: &ObservedMatrix) -> Result<f64> {
    check_shape(x_bar, test)?;
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let (r, c, v) = (test.row_indices(), test.col_indices(), test.values());
    let sse = Exec::default().sum(test.nnz(), |e| (x_bar.entry(r[e], c[e]) - v[e]).powi(2));
    Ok((sse / test.nnz() as f64).sqrt())
}

fn check_shape(x: &impl EntrySource, obs: &ObservedMatrix) -> Result<()> {
    if x.shape() != obs.shape() {
        return Err(Error::shape(format!(
            "estimate {:?} vs evaluation set {:?}",
            x.shape(),
            obs.shape()
        )));
    }
    Ok(())
}

/// Matrices whose singular values can be computed.
pub trait Spectrum {
    fn spectrum(&self) -> Result<Vec<f64>>;
}

impl Spectrum for DenseMatrix {
    fn spectrum(&self) -> Result<Vec<f64>> {
        singular_values(self)
    }
}

impl Spectrum for FactorPair {
    fn spectrum(&self) -> Result<Vec<f64>> {
        self.singular_values()
    }
}

/// Number of singular values above `rel_tol · σ₁`; zero for the zero matrix.
pub fn numerical_rank(x: &impl Spectrum, rel_tol: f64) -> Result<usize> {
    Ok(rank_of_spectrum(&x.spectrum()?, rel_tol))
}

pub fn rank_of_spectrum(sigma: &[f64], rel_tol: f64) -> usize {
    let top = sigma.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0;
    }
    sigma.iter().filter(|&&s| s > rel_tol * top).count()
}
