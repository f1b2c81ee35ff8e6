//! Reference oracles for `nnfn-core`.
//!
//! Every oracle here recomputes its answer without calling the code it
//! checks: proximal maps are found by brute-force minimization of their
//! defining objective, spectra come from nalgebra's SVD, and gradients are
//! central finite differences of a dense objective. The suites draw random
//! cases from a seeded generator and summarize agreement in a
//! [`SuiteReport`].

pub mod gradients;
pub mod l12;
pub mod scalar;
pub mod spectral;

use std::fmt;

use nnfn_core::RegularizerKind;

/// Default number of randomized cases per prox suite.
pub const DEFAULT_CASES: usize = 1000;
/// Default number of random matrices for the local-optimality probe.
pub const DEFAULT_PROBE_MATRICES: usize = 100;
/// Default number of random instances for the gradient check.
pub const DEFAULT_GRADIENT_CASES: usize = 100;

/// Outcome of one randomized suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest discrepancy seen, in the suite's own unit.
    pub worst: f64,
    pub first_failure: Option<String>,
}

impl SuiteReport {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            cases: 0,
            failures: 0,
            worst: 0.0,
            first_failure: None,
        }
    }

    fn record(&mut self, discrepancy: f64, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if discrepancy.is_nan() {
            self.worst = f64::NAN;
        } else if !self.worst.is_nan() {
            self.worst = self.worst.max(discrepancy);
        }
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {}/{} cases agree, worst {:.3e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases - self.failures,
            self.cases,
            self.worst
        )?;
        if let Some(msg) = &self.first_failure {
            write!(f, " (first failure: {msg})")?;
        }
        Ok(())
    }
}

/// Runs every suite at its default size.
pub fn all_suites(seed: u64) -> Vec<SuiteReport> {
    let mut out = vec![l12::prox_l12_suite(DEFAULT_CASES, seed)];
    for kind in [RegularizerKind::CappedL1, RegularizerKind::Lsp, RegularizerKind::Mcp] {
        out.push(scalar::prox_scalar_suite(kind, DEFAULT_CASES, seed));
    }
    out.push(spectral::prox_nnfn_suite(DEFAULT_PROBE_MATRICES, seed));
    for kind in [
        RegularizerKind::Nuclear,
        RegularizerKind::Nnfn,
        RegularizerKind::CappedL1,
        RegularizerKind::Lsp,
        RegularizerKind::Mcp,
    ] {
        out.push(spectral::shrinkage_suite(kind, DEFAULT_CASES, seed));
    }
    out.push(gradients::gradient_suite(DEFAULT_GRADIENT_CASES, seed, false));
    out.push(gradients::gradient_suite(DEFAULT_GRADIENT_CASES, seed, true));
    out
}
