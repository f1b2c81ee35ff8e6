//! Spectral regularizers and their proximal maps.
//!
//! Every regularizer here is a function of the singular values. Its matrix
//! proximal operator rotates into the singular basis of the argument, shrinks
//! the spectrum with a vector map, and rotates back. Shrunk values below
//! [`ZERO_SNAP`] are set to exactly `0.0` so the recovered rank is well
//! defined.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd_above_warm, thin_svd_capped_warm, DenseMatrix, WarmStart};
use crate::parallel::Exec;

pub const ZERO_SNAP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizerKind {
    Nuclear,
    Nnfn,
    CappedL1,
    Lsp,
    Mcp,
}

impl RegularizerKind {
    pub const ALL: [RegularizerKind; 5] = [
        RegularizerKind::Nuclear,
        RegularizerKind::Nnfn,
        RegularizerKind::CappedL1,
        RegularizerKind::Lsp,
        RegularizerKind::Mcp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegularizerKind::Nuclear => "nuclear",
            RegularizerKind::Nnfn => "nnfn",
            RegularizerKind::CappedL1 => "capped-l1",
            RegularizerKind::Lsp => "lsp",
            RegularizerKind::Mcp => "mcp",
        }
    }

    /// Whether the kind takes a `theta` parameter.
    pub fn uses_theta(self) -> bool {
        matches!(
            self,
            RegularizerKind::CappedL1 | RegularizerKind::Lsp | RegularizerKind::Mcp
        )
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegularizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown regularizer `{s}`")))
    }
}

/// Regularizer choice with its weight `lambda` and, for the separable
/// nonconvex penalties, the shape parameter `theta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub lambda: f64,
    pub theta: Option<f64>,
}

impl RegularizerSpec {
    pub fn new(kind: RegularizerKind, lambda: f64, theta: Option<f64>) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        match (kind.uses_theta(), theta) {
            (true, Some(t)) if t.is_finite() && t > 0.0 => {}
            (true, Some(t)) => {
                return Err(Error::invalid(format!("theta must be > 0, got {t}")));
            }
            (true, None) => {
                return Err(Error::invalid(format!("{kind} requires theta")));
            }
            (false, Some(_)) => {
                return Err(Error::invalid(format!("{kind} does not take theta")));
            }
            (false, None) => {}
        }
        Ok(Self {
            kind,
            lambda,
            theta,
        })
    }

    pub fn nuclear(lambda: f64) -> Result<Self> {
        Self::new(RegularizerKind::Nuclear, lambda, None)
    }

    pub fn nnfn(lambda: f64) -> Result<Self> {
        Self::new(RegularizerKind::Nnfn, lambda, None)
    }

    pub fn capped_l1(lambda: f64, theta: f64) -> Result<Self> {
        Self::new(RegularizerKind::CappedL1, lambda, Some(theta))
    }

    pub fn lsp(lambda: f64, theta: f64) -> Result<Self> {
        Self::new(RegularizerKind::Lsp, lambda, Some(theta))
    }

    pub fn mcp(lambda: f64, theta: f64) -> Result<Self> {
        Self::new(RegularizerKind::Mcp, lambda, Some(theta))
    }

    fn theta_value(&self) -> f64 {
        self.theta.unwrap_or(1.0)
    }

    /// Per-singular-value penalty `r̂(s)` for the separable kinds.
    ///
    /// MCP's penalty depends on `lambda` itself: `s − s²/(2θλ)` below `θλ`
    /// and the constant `θλ/2` above it.
    pub fn scalar_penalty(&self, s: f64) -> f64 {
        let s = s.abs();
        let theta = self.theta_value();
        match self.kind {
            RegularizerKind::Nuclear | RegularizerKind::Nnfn => s,
            RegularizerKind::CappedL1 => s.min(theta),
            RegularizerKind::Lsp => (s / theta).ln_1p(),
            RegularizerKind::Mcp => {
                let knee = theta * self.lambda;
                if s <= knee {
                    s - s * s / (2.0 * knee)
                } else {
                    knee / 2.0
                }
            }
        }
    }
}

fn check_finite(z: &[f64]) -> Result<()> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input to proximal map"));
    }
    Ok(())
}

fn snap(v: f64) -> f64 {
    if v.abs() < ZERO_SNAP {
        0.0
    } else {
        v
    }
}

/// `r(X)` as a function of `σ(X)`, without the `λ` factor.
pub fn regularizer_value(spec: &RegularizerSpec, sigma: &[f64]) -> Result<f64> {
    if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::invalid(format!(
            "singular values must be finite and >= 0, got {s}"
        )));
    }
    let l1: f64 = sigma.iter().sum();
    Ok(match spec.kind {
        RegularizerKind::Nuclear => l1,
        RegularizerKind::Nnfn => {
            let l2 = sigma.iter().map(|s| s * s).sum::<f64>().sqrt();
            (l1 - l2).max(0.0)
        }
        _ => sigma.iter().map(|&s| spec.scalar_penalty(s)).sum(),
    })
}

/// Soft-thresholding `sign(z)·max(|z| − λ, 0)`.
pub fn soft_threshold(z: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_finite(z)?;
    if lambda < 0.0 {
        return Err(Error::invalid("lambda must be >= 0"));
    }
    Ok(z.iter()
        .map(|&v| snap(v.signum() * (v.abs() - lambda).max(0.0)))
        .collect())
}

/// Proximal map of `λ(‖x‖₁ − ‖x‖₂)`.
///
/// Closed form by the magnitude of the largest entry:
/// * `‖z‖∞ > λ`: soft-threshold at `λ`, then rescale the result `y` by
///   `(‖y‖₂ + λ)/‖y‖₂`;
/// * `0 < ‖z‖∞ ≤ λ`: keep only the (first) largest-magnitude entry unchanged;
/// * `z = 0`: zero.
pub fn prox_l12(z: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_finite(z)?;
    if lambda < 0.0 {
        return Err(Error::invalid("lambda must be >= 0"));
    }
    if lambda == 0.0 {
        return Ok(z.to_vec());
    }
    let mut out = vec![0.0; z.len()];
    let Some((imax, zmax)) = z
        .iter()
        .map(|v| v.abs())
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, a)| match best {
            Some((_, b)) if b >= a => best,
            _ => Some((i, a)),
        })
    else {
        return Ok(out);
    };
    if zmax == 0.0 {
        return Ok(out);
    }
    if zmax > lambda {
        let y = soft_threshold(z, lambda)?;
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = (ny + lambda) / ny;
        for (o, v) in out.iter_mut().zip(&y) {
            *o = snap(v * scale);
        }
    } else {
        out[imax] = z[imax];
    }
    Ok(out)
}

/// Scalar proximal map `argmin_x ½(x − s)² + λ·r̂(|x|)` for capped-ℓ1, LSP and
/// MCP.
pub fn prox_scalar(spec: &RegularizerSpec, sigma_i: f64) -> Result<f64> {
    prox_scalar_weighted(spec, spec.lambda, sigma_i)
}

/// Like [`prox_scalar`] with the outer multiplier `weight` in place of
/// `spec.lambda`. MCP's penalty shape still uses `spec.lambda`.
pub fn prox_scalar_weighted(spec: &RegularizerSpec, weight: f64, sigma_i: f64) -> Result<f64> {
    if !spec.kind.uses_theta() {
        return Err(Error::UnsupportedRegularizer {
            kind: spec.kind.name(),
            operation: "prox_scalar",
        });
    }
    if !sigma_i.is_finite() {
        return Err(Error::invalid("non-finite input to proximal map"));
    }
    if weight == 0.0 {
        return Ok(sigma_i);
    }
    let s = sigma_i.abs();
    let theta = spec.theta_value();
    let mut candidates = vec![0.0, s];
    match spec.kind {
        RegularizerKind::CappedL1 => {
            candidates.push((s - weight).clamp(0.0, theta));
            candidates.push(theta);
            candidates.push(s.max(theta));
        }
        RegularizerKind::Lsp => {
            // stationary points of ½(x−s)² + w·ln(1 + x/θ) on x > 0
            let disc = (s + theta).powi(2) - 4.0 * weight;
            if disc >= 0.0 {
                let r = disc.sqrt();
                for root in [(s - theta + r) / 2.0, (s - theta - r) / 2.0] {
                    if root > 0.0 {
                        candidates.push(root);
                    }
                }
            }
        }
        RegularizerKind::Mcp => {
            let knee = theta * spec.lambda;
            candidates.push(knee);
            candidates.push(s.max(knee));
            if knee > 0.0 {
                let curvature = 1.0 - weight / knee;
                if curvature > 0.0 {
                    candidates.push(((s - weight) / curvature).clamp(0.0, knee));
                }
            }
        }
        RegularizerKind::Nuclear | RegularizerKind::Nnfn => unreachable!(),
    }
    let objective = |x: f64| 0.5 * (x - s).powi(2) + weight * spec.scalar_penalty(x);
    let mut best = (f64::INFINITY, f64::INFINITY);
    for x in candidates {
        let f = objective(x);
        if f < best.0 || (f == best.0 && x < best.1) {
            best = (f, x);
        }
    }
    Ok(snap(sigma_i.signum() * best.1))
}

/// Applies the spectral shrinkage of `spec` with multiplier `weight` to a
/// spectrum.
pub fn shrink_spectrum(spec: &RegularizerSpec, weight: f64, sigma: &[f64]) -> Result<Vec<f64>> {
    match spec.kind {
        RegularizerKind::Nuclear => soft_threshold(sigma, weight),
        RegularizerKind::Nnfn => prox_l12(sigma, weight),
        _ => sigma
            .iter()
            .map(|&s| prox_scalar_weighted(spec, weight, s))
            .collect(),
    }
}

/// Proximal map of `λ(‖X‖_* − ‖X‖_F)`.
pub fn prox_nnfn(z: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    prox_spectral(&RegularizerSpec::nnfn(lambda)?, z)
}

/// Generalized singular value thresholding for any supported kind.
pub fn prox_spectral(spec: &RegularizerSpec, z: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(prox_spectral_step(spec, spec.lambda, z, None, Exec::default())?.matrix)
}

/// Result of one spectral proximal step.
#[derive(Clone, Debug)]
pub struct SpectralProx {
    pub matrix: DenseMatrix,
    /// Shrunk singular values of `matrix`, non-increasing.
    pub sigma: Vec<f64>,
}

/// `prox_{weight·r}(Z)` with an optional rank cap on the SVD.
pub fn prox_spectral_step(
    spec: &RegularizerSpec,
    weight: f64,
    z: &DenseMatrix,
    rank_cap: Option<usize>,
    exec: Exec,
) -> Result<SpectralProx> {
    prox_spectral_step_warm(spec, weight, z, rank_cap, &mut WarmStart::default(), exec)
}

/// [`prox_spectral_step`] whose partial SVD starts from the subspace kept in
/// `warm` by the previous call.
pub fn prox_spectral_step_warm(
    spec: &RegularizerSpec,
    weight: f64,
    z: &DenseMatrix,
    rank_cap: Option<usize>,
    warm: &mut WarmStart,
    exec: Exec,
) -> Result<SpectralProx> {
    // soft-thresholding and the ℓ1-2 prox send every σ ≤ weight to zero, so
    // without a cap only the triplets above the threshold are needed
    let svd = match (rank_cap, spec.kind) {
        (None, RegularizerKind::Nuclear | RegularizerKind::Nnfn) if weight > 0.0 => {
            svd_above_warm(z, weight, warm, exec)?
        }
        _ => thin_svd_capped_warm(z, rank_cap, warm, exec)?,
    };
    let shrunk = shrink_spectrum(spec, weight, &svd.sigma)?;
    let matrix = svd.reassemble(&shrunk, exec)?;
    let mut sigma = shrunk;
    sigma.sort_by(|a, b| b.total_cmp(a));
    Ok(SpectralProx { matrix, sigma })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn values() {
        let nn = RegularizerSpec::nnfn(1.0).unwrap();
        assert_eq!(regularizer_value(&nn, &[5.0]).unwrap(), 0.0);
        assert!((regularizer_value(&nn, &[4.0, 3.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!((regularizer_value(&nn, &[3.0, 4.0]).unwrap() - 2.0).abs() < 1e-15);
        let nuc = RegularizerSpec::nuclear(1.0).unwrap();
        assert_eq!(regularizer_value(&nuc, &[3.0, 2.0]).unwrap(), 5.0);
        assert!(regularizer_value(&nuc, &[-1.0]).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(RegularizerSpec::nnfn(-1.0).is_err());
        assert!(RegularizerSpec::new(RegularizerKind::Nnfn, 1.0, Some(1.0)).is_err());
        assert!(RegularizerSpec::new(RegularizerKind::Lsp, 1.0, None).is_err());
        assert!(RegularizerSpec::lsp(1.0, 0.0).is_err());
        assert_eq!("capped-l1".parse::<RegularizerKind>().unwrap(), RegularizerKind::CappedL1);
        assert!("scad".parse::<RegularizerKind>().is_err());
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[3.0, 1.0], 1.0).unwrap(), vec![2.0, 0.0]);
        assert_eq!(soft_threshold(&[3.0, -1.5], 0.0).unwrap(), vec![3.0, -1.5]);
        assert_eq!(soft_threshold(&[0.5], 1.0).unwrap(), vec![0.0]);
        assert!(soft_threshold(&[f64::NAN], 1.0).is_err());
    }

    #[test]
    fn prox_l12_regimes() {
        assert_eq!(prox_l12(&[0.0, 0.0, 0.0], 2.0).unwrap(), vec![0.0; 3]);
        // ‖z‖∞ ≤ λ keeps the largest entry alone
        assert_eq!(prox_l12(&[0.9, 0.5, 0.1], 1.0).unwrap(), vec![0.9, 0.0, 0.0]);
        assert_eq!(prox_l12(&[0.2, -0.7], 1.0).unwrap(), vec![0.0, -0.7]);
        // one active coordinate: its value is untouched
        assert!(close(&prox_l12(&[3.0, 1.0], 1.0).unwrap(), &[3.0, 0.0], 1e-15));
        let x = prox_l12(&[5.0, 3.0, 1.0], 2.0).unwrap();
        let ny = 10f64.sqrt();
        let s = (ny + 2.0) / ny;
        assert!(close(&x, &[3.0 * s, 1.0 * s, 0.0], 1e-14));
        assert_eq!(x[2], 0.0);
    }

    #[test]
    fn prox_scalar_examples() {
        let c = RegularizerSpec::capped_l1(1.0, 1.0).unwrap();
        assert_eq!(prox_scalar(&c, 10.0).unwrap(), 10.0);
        assert_eq!(prox_scalar(&c, 0.8).unwrap(), 0.0);
        let zero = RegularizerSpec::mcp(0.0, 2.0).unwrap();
        assert_eq!(prox_scalar(&zero, 0.7).unwrap(), 0.7);
        let m = RegularizerSpec::mcp(1.0, 2.0).unwrap();
        assert_eq!(prox_scalar(&m, 0.5).unwrap(), 0.0);
        let nn = RegularizerSpec::nnfn(1.0).unwrap();
        assert!(matches!(
            prox_scalar(&nn, 1.0),
            Err(Error::UnsupportedRegularizer { .. })
        ));
    }

    #[test]
    fn capped_l1_tie_prefers_smaller_x() {
        // x = 0 costs ½s² = 2 and x = s costs λθ = 2
        let c = RegularizerSpec::capped_l1(2.0, 1.0).unwrap();
        assert_eq!(prox_scalar(&c, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn spectral_dispatch_on_diagonal() {
        let z = DenseMatrix::diag(&[3.0, 1.0]);
        let nuc = prox_spectral(&RegularizerSpec::nuclear(1.0).unwrap(), &z).unwrap();
        assert!(nuc.sub(&DenseMatrix::diag(&[2.0, 0.0])).unwrap().frobenius_norm() < 1e-12);

        let z = DenseMatrix::diag(&[5.0, 3.0]);
        let expect = prox_l12(&[5.0, 3.0], 1.0).unwrap();
        let got = prox_nnfn(&z, 1.0).unwrap();
        assert!(got.sub(&DenseMatrix::diag(&expect)).unwrap().frobenius_norm() < 1e-12);

        let z = DenseMatrix::diag(&[0.5]);
        let mcp = RegularizerSpec::mcp(1.0, 2.0).unwrap();
        let got = prox_spectral(&mcp, &z).unwrap();
        assert_eq!(got.get(0, 0), prox_scalar(&mcp, 0.5).unwrap());
    }

    #[test]
    fn prox_nnfn_identity_at_zero_lambda() {
        let z = DenseMatrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.3, 4.0, 1.0]]).unwrap();
        let x = prox_nnfn(&z, 0.0).unwrap();
        assert!(x.sub(&z).unwrap().frobenius_norm() < 1e-10);
    }
}
