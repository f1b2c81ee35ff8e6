//! Objective values and gradients shared by the two drivers.

use crate::error::{Error, Result};
use crate::linalg::{
    frobenius_from_grams, singular_values, sparse_mul_dense, sparse_residual_with,
    sparse_transpose_mul_dense, DenseMatrix, EntrySource, FactorPair,
};
use crate::observed::ObservedMatrix;
use crate::parallel::Exec;
use crate::regularizers::{regularizer_value, RegularizerSpec};

/// Default threshold below which `‖W·Hᵀ‖_F` is treated as zero.
pub const DEFAULT_ZERO_GUARD: f64 = 1e-12;

/// Largest tolerated `|L_ij − L_ji|` for a Laplacian.
pub const LAPLACIAN_SYMMETRY_TOL: f64 = 1e-10;

/// `½‖P_Ω(X − O)‖_F²`.
pub fn loss_value(x: &impl EntrySource, obs: &ObservedMatrix) -> Result<f64> {
    let r = sparse_residual_with(x, obs, Exec::default())?;
    Ok(half_sq_norm(r.values(), Exec::default()))
}

pub(crate) fn half_sq_norm(v: &[f64], exec: Exec) -> f64 {
    0.5 * exec.sum(v.len(), |i| v[i] * v[i])
}

/// `loss + λ·r(σ(X))`, one SVD of `X`.
pub fn full_objective(x: &DenseMatrix, obs: &ObservedMatrix, spec: &RegularizerSpec) -> Result<f64> {
    let loss = loss_value(x, obs)?;
    if spec.lambda == 0.0 {
        return Ok(loss);
    }
    let sigma = singular_values(x)?;
    Ok(loss + spec.lambda * regularizer_value(spec, &sigma)?)
}

/// `F(W, H) = loss + (λ/2)(‖W‖² + ‖H‖²) − λ‖W·Hᵀ‖_F`, SVD-free.
pub fn factored_objective(fp: &FactorPair, obs: &ObservedMatrix, lambda: f64) -> Result<f64> {
    Ok(FactoredEval::compute(fp, obs, lambda, FactoredOptions::default())?.objective)
}

/// `(∇_W F, ∇_H F)`.
///
/// With `S = P_Ω(W·Hᵀ − O)` and `c = λ/‖W·Hᵀ‖_F`:
/// `∇_W = S·H + λW − c·W(HᵀH)`, `∇_H = Sᵀ·W + λH − c·H(WᵀW)`. When
/// `‖W·Hᵀ‖_F < zero_guard_eps` the `c` term is dropped.
pub fn factored_gradients(
    fp: &FactorPair,
    obs: &ObservedMatrix,
    lambda: f64,
    zero_guard_eps: f64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let opts = FactoredOptions {
        zero_guard_eps,
        ..FactoredOptions::default()
    };
    let eval = FactoredEval::compute(fp, obs, lambda, opts)?;
    Ok((eval.grad_w, eval.grad_h))
}

/// Which matrix a Laplacian term is evaluated on.
#[derive(Clone, Copy, Debug)]
pub enum Iterate<'a> {
    Dense(&'a DenseMatrix),
    Factored(&'a FactorPair),
}

#[derive(Clone, Debug, PartialEq)]
pub enum LaplacianGradient {
    Dense(DenseMatrix),
    Factored { w: DenseMatrix, h: DenseMatrix },
}

/// Checks that `l` is a square symmetric `m × m` matrix.
pub fn validate_laplacian(l: &DenseMatrix, m: usize) -> Result<()> {
    if l.shape() != (m, m) {
        return Err(Error::shape(format!(
            "Laplacian {:?} for {m} rows",
            l.shape()
        )));
    }
    let asym = l.max_asymmetry()?;
    if asym > LAPLACIAN_SYMMETRY_TOL {
        return Err(Error::invalid(format!(
            "Laplacian asymmetric by {asym:e}"
        )));
    }
    Ok(())
}

/// `weight·Tr(Xᵀ L X)` and its gradient.
///
/// For `X = W·Hᵀ` the value is `weight·Tr((WᵀLW)(HᵀH))` and the gradient is
/// `2·weight·L·W·(HᵀH)` for `W` and `2·weight·H·(WᵀLW)` for `H`.
pub fn laplacian_term(
    x: Iterate<'_>,
    l: &DenseMatrix,
    weight: f64,
) -> Result<(f64, LaplacianGradient)> {
    if !(weight.is_finite() && weight >= 0.0) {
        return Err(Error::invalid(format!(
            "Laplacian weight must be >= 0, got {weight}"
        )));
    }
    let m = match x {
        Iterate::Dense(d) => d.rows(),
        Iterate::Factored(fp) => fp.w.rows(),
    };
    validate_laplacian(l, m)?;
    laplacian_term_unchecked(x, l, weight, Exec::default())
}

pub(crate) fn laplacian_term_unchecked(
    x: Iterate<'_>,
    l: &DenseMatrix,
    weight: f64,
    exec: Exec,
) -> Result<(f64, LaplacianGradient)> {
    match x {
        Iterate::Dense(d) => {
            if weight == 0.0 {
                return Ok((0.0, LaplacianGradient::Dense(DenseMatrix::zeros(d.rows(), d.cols()))));
            }
            let lx = l.matmul_with(d, exec)?;
            let value = weight
                * lx.as_slice()
                    .iter()
                    .zip(d.as_slice())
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            Ok((value, LaplacianGradient::Dense(lx.scaled(2.0 * weight))))
        }
        Iterate::Factored(fp) => {
            let (w, h) = (&fp.w, &fp.h);
            if weight == 0.0 {
                return Ok((
                    0.0,
                    LaplacianGradient::Factored {
                        w: DenseMatrix::zeros(w.rows(), w.cols()),
                        h: DenseMatrix::zeros(h.rows(), h.cols()),
                    },
                ));
            }
            let lw = l.matmul_with(w, exec)?;
            let wlw = w.transpose().matmul_with(&lw, exec)?;
            let hh = h.gram(exec);
            let value = weight * trace_of_product(&wlw, &hh);
            let gw = lw.mul_small(&hh, exec)?.scaled(2.0 * weight);
            let gh = h.mul_small(&wlw, exec)?.scaled(2.0 * weight);
            Ok((value, LaplacianGradient::Factored { w: gw, h: gh }))
        }
    }
}

/// `Tr(A·B)` for square `A`, `B` of the same size.
fn trace_of_product(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let k = a.rows();
    let mut t = 0.0;
    for i in 0..k {
        for j in 0..k {
            t += a.get(i, j) * b.get(j, i);
        }
    }
    t
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct FactoredOptions<'a> {
    pub zero_guard_eps: f64,
    pub exec: Exec,
    /// Pre-validated Laplacian and its weight.
    pub laplacian: Option<(&'a DenseMatrix, f64)>,
    /// Drop the `−λ‖W·Hᵀ‖_F` term (factored nuclear norm).
    pub nuclear_only: bool,
}

impl Default for FactoredOptions<'_> {
    fn default() -> Self {
        Self {
            zero_guard_eps: DEFAULT_ZERO_GUARD,
            exec: Exec::default(),
            laplacian: None,
            nuclear_only: false,
        }
    }
}

/// Objective and gradients at one point, sharing the residual and Gram
/// matrices.
pub(crate) struct FactoredEval {
    pub objective: f64,
    pub grad_w: DenseMatrix,
    pub grad_h: DenseMatrix,
}

impl FactoredEval {
    pub fn compute(
        fp: &FactorPair,
        obs: &ObservedMatrix,
        lambda: f64,
        opts: FactoredOptions<'_>,
    ) -> Result<Self> {
        let exec = opts.exec;
        let (w, h) = (&fp.w, &fp.h);
        let residual = sparse_residual_with(fp, obs, exec)?;
        let loss = half_sq_norm(residual.values(), exec);

        let mut grad_w = sparse_mul_dense(&residual, h, exec)?;
        let mut grad_h = sparse_transpose_mul_dense(&residual, w, exec)?;

        let mut objective = loss;
        if lambda != 0.0 {
            let gw = w.gram(exec);
            let gh = h.gram(exec);
            objective += 0.5 * lambda * (gw.trace() + gh.trace());
            grad_w.axpy(lambda, w)?;
            grad_h.axpy(lambda, h)?;
            if !opts.nuclear_only {
                let fro = frobenius_from_grams(&gw, &gh);
                objective -= lambda * fro;
                if fro >= opts.zero_guard_eps {
                    let c = lambda / fro;
                    grad_w.axpy(-c, &w.mul_small(&gh, exec)?)?;
                    grad_h.axpy(-c, &h.mul_small(&gw, exec)?)?;
                }
            }
        }
        if let Some((l, weight)) = opts.laplacian {
            let (value, grad) = laplacian_term_unchecked(Iterate::Factored(fp), l, weight, exec)?;
            objective += value;
            if let LaplacianGradient::Factored { w: lw, h: lh } = grad {
                grad_w.axpy(1.0, &lw)?;
                grad_h.axpy(1.0, &lh)?;
            }
        }
        Ok(Self {
            objective,
            grad_w,
            grad_h,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single() -> ObservedMatrix {
        ObservedMatrix::new(2, 2, vec![(0, 0, 1.0)]).unwrap()
    }

    #[test]
    fn loss_examples() {
        let obs = ObservedMatrix::new(2, 2, vec![(0, 0, 2.0)]).unwrap();
        assert_eq!(loss_value(&DenseMatrix::zeros(2, 2), &obs).unwrap(), 2.0);
        let x = DenseMatrix::from_rows(&[vec![2.0, 9.0], vec![9.0, 9.0]]).unwrap();
        assert_eq!(loss_value(&x, &obs).unwrap(), 0.0);
    }

    #[test]
    fn full_objective_examples() {
        let zero = DenseMatrix::zeros(2, 2);
        for spec in [
            RegularizerSpec::nuclear(3.0).unwrap(),
            RegularizerSpec::nnfn(3.0).unwrap(),
            RegularizerSpec::mcp(3.0, 2.0).unwrap(),
        ] {
            assert_eq!(full_objective(&zero, &single(), &spec).unwrap(), 0.5);
        }
        let rank1 = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let spec = RegularizerSpec::nnfn(5.0).unwrap();
        let f = full_objective(&rank1, &single(), &spec).unwrap();
        assert!((f - loss_value(&rank1, &single()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn factored_objective_examples() {
        let fp = FactorPair::new(DenseMatrix::zeros(2, 1), DenseMatrix::zeros(2, 1)).unwrap();
        assert_eq!(factored_objective(&fp, &single(), 1.0).unwrap(), 0.5);
        let fp = FactorPair::new(
            DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap(),
            DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![1.0, 1.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(
            factored_objective(&fp, &single(), 0.0).unwrap(),
            loss_value(&fp, &single()).unwrap()
        );
    }

    #[test]
    fn zero_guard_drops_frobenius_gradient() {
        let fp = FactorPair::new(
            DenseMatrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap(),
            DenseMatrix::zeros(2, 1),
        )
        .unwrap();
        let (gw, gh) = factored_gradients(&fp, &single(), 0.5, 1e-12).unwrap();
        // S = P_Ω(0 − O) = −1 at (0,0); S·H = 0, Sᵀ·W = [[−1],[0]]
        assert_eq!(gw.as_slice(), &[0.5, 0.0]);
        assert_eq!(gh.as_slice(), &[-1.0, 0.0]);
    }

    #[test]
    fn zero_lambda_stationary_at_exact_fit() {
        let fp = FactorPair::new(
            DenseMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap(),
            DenseMatrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap(),
        )
        .unwrap();
        let obs = ObservedMatrix::new(2, 2, vec![(0, 0, 3.0), (1, 1, 8.0), (0, 1, 4.0)]).unwrap();
        let (gw, gh) = factored_gradients(&fp, &obs, 0.0, 1e-12).unwrap();
        assert!(gw.as_slice().iter().chain(gh.as_slice()).all(|&g| g == 0.0));
    }

    #[test]
    fn laplacian_trivial_cases() {
        let fp = FactorPair::new(DenseMatrix::identity(2), DenseMatrix::identity(2)).unwrap();
        let l = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let (v, _) = laplacian_term(Iterate::Factored(&fp), &l, 0.0).unwrap();
        assert_eq!(v, 0.0);
        let (v, g) = laplacian_term(Iterate::Factored(&fp), &DenseMatrix::zeros(2, 2), 1.0).unwrap();
        assert_eq!(v, 0.0);
        match g {
            LaplacianGradient::Factored { w, h } => {
                assert_eq!(w.frobenius_norm() + h.frobenius_norm(), 0.0)
            }
            LaplacianGradient::Dense(_) => panic!("expected factored gradient"),
        }
        assert!(laplacian_term(Iterate::Factored(&fp), &l, -1.0).is_err());
        let asym = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![0.0, 1.0]]).unwrap();
        assert!(laplacian_term(Iterate::Factored(&fp), &asym, 1.0).is_err());
    }

    #[test]
    fn laplacian_dense_and_factored_agree() {
        let fp = FactorPair::new(
            DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![-0.3, 1.0], vec![0.2, 0.1]]).unwrap(),
            DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![1.0, 1.0]]).unwrap(),
        )
        .unwrap();
        let l = DenseMatrix::from_rows(&[
            vec![1.5, -1.0, -0.5],
            vec![-1.0, 1.0, 0.0],
            vec![-0.5, 0.0, 0.5],
        ])
        .unwrap();
        let x = fp.materialize();
        let (vf, _) = laplacian_term(Iterate::Factored(&fp), &l, 0.7).unwrap();
        let (vd, _) = laplacian_term(Iterate::Dense(&x), &l, 0.7).unwrap();
        assert!((vf - vd).abs() < 1e-12 * vd.abs().max(1.0));
    }
}
