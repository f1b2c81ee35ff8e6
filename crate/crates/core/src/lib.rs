//! Low-rank matrix completion with the nuclear-norm-minus-Frobenius-norm
//! regularizer.
//!
//! Two solvers are provided: a proximal gradient method that applies the
//! spectral prox of a chosen regularizer each iteration, and an SVD-free
//! gradient method on a factorization `X = W Hᵀ`. Convex and nonconvex
//! baselines (nuclear norm, capped-ℓ1, LSP, MCP) share the same interfaces.

pub mod data;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod observed;
pub mod parallel;
pub mod regularizers;
pub mod solvers;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, FactorPair, SpectralDecomposition};
pub use observed::ObservedMatrix;
pub use parallel::Exec;
pub use regularizers::{RegularizerKind, RegularizerSpec};
pub use solvers::{SolveStatus, SolveTrace, SolverConfig, TraceRecord};
