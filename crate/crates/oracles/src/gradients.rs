//! Finite-difference oracle for the factored objective's gradients.

use nalgebra::DMatrix;
use nnfn_core::solvers::{factored_gradients, laplacian_term, Iterate, LaplacianGradient, DEFAULT_ZERO_GUARD};
use nnfn_core::{DenseMatrix, FactorPair, ObservedMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::spectral::{from_nalgebra, to_nalgebra};
use crate::SuiteReport;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Largest accepted `‖g − g_fd‖ / ‖g_fd‖`.
pub const TOL: f64 = 1e-5;

/// One random small problem.
#[derive(Clone, Debug)]
pub struct Instance {
    pub w: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub obs: ObservedMatrix,
    pub lambda: f64,
    /// Laplacian and its weight.
    pub laplacian: Option<(DMatrix<f64>, f64)>,
}

/// `½‖P_Ω(WHᵀ − O)‖² + (λ/2)(‖W‖² + ‖H‖²) − λ‖WHᵀ‖_F + μ·Tr((WHᵀ)ᵀ L WHᵀ)`,
/// evaluated densely.
pub fn dense_objective(inst: &Instance, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    let x = w * h.transpose();
    let loss: f64 = inst.obs.iter().map(|(i, j, v)| 0.5 * (x[(i, j)] - v).powi(2)).sum();
    let reg = inst.lambda * (0.5 * (w.norm_squared() + h.norm_squared()) - x.norm());
    let graph = match &inst.laplacian {
        Some((l, mu)) => mu * (x.transpose() * l * &x).trace(),
        None => 0.0,
    };
    loss + reg + graph
}

/// Central differences of [`dense_objective`] in every entry of `W` and `H`.
pub fn finite_difference_gradients(inst: &Instance) -> (DMatrix<f64>, DMatrix<f64>) {
    let diff = |which: usize| {
        let base = if which == 0 { &inst.w } else { &inst.h };
        DMatrix::from_fn(base.nrows(), base.ncols(), |i, j| {
            let (mut plus, mut minus) = (base.clone(), base.clone());
            plus[(i, j)] += FD_STEP;
            minus[(i, j)] -= FD_STEP;
            let (fp, fm) = if which == 0 {
                (dense_objective(inst, &plus, &inst.h), dense_objective(inst, &minus, &inst.h))
            } else {
                (dense_objective(inst, &inst.w, &plus), dense_objective(inst, &inst.w, &minus))
            };
            (fp - fm) / (2.0 * FD_STEP)
        })
    };
    (diff(0), diff(1))
}

/// `L = D − A` for a random symmetric nonnegative affinity `A` with zero
/// diagonal.
pub fn random_laplacian(m: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let v = if rng.random_bool(0.6) { rng.random_range(0.0..1.0) } else { 0.0 };
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let mut l = -a.clone();
    for i in 0..m {
        l[(i, i)] = a.row(i).sum();
    }
    l
}

pub fn random_instance(rng: &mut impl Rng, with_laplacian: bool) -> Instance {
    let (m, n, k) = (rng.random_range(3..=7), rng.random_range(3..=7), rng.random_range(1..=4));
    let mut gauss = |r: usize, c: usize| DMatrix::<f64>::from_fn(r, c, |_, _| StandardNormal.sample(rng));
    let (w, h) = (gauss(m, k), gauss(n, k));
    let mut entries = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.random_bool(0.6) {
                let v: f64 = StandardNormal.sample(rng);
                entries.push((i, j, v));
            }
        }
    }
    let obs = ObservedMatrix::new(m, n, entries).expect("valid entries");
    let lambda = rng.random_range(0.01..2.0);
    let laplacian = with_laplacian.then(|| (random_laplacian(m, rng), rng.random_range(0.1..1.0)));
    Instance { w, h, obs, lambda, laplacian }
}

/// `(∇_W, ∇_H)` from the library: `factored_gradients` plus the
/// Laplacian term's gradient when present.
pub fn library_gradients(inst: &Instance) -> nnfn_core::Result<(DMatrix<f64>, DMatrix<f64>)> {
    let fp = FactorPair::new(from_nalgebra(&inst.w), from_nalgebra(&inst.h))?;
    let (mut gw, mut gh) = factored_gradients(&fp, &inst.obs, inst.lambda, DEFAULT_ZERO_GUARD)?;
    if let Some((l, mu)) = &inst.laplacian {
        let l: DenseMatrix = from_nalgebra(l);
        if let (_, LaplacianGradient::Factored { w, h }) = laplacian_term(Iterate::Factored(&fp), &l, *mu)? {
            gw.axpy(1.0, &w)?;
            gh.axpy(1.0, &h)?;
        }
    }
    Ok((to_nalgebra(&gw), to_nalgebra(&gh)))
}

/// `‖g − g_fd‖ / max(‖g_fd‖, 1e-12)` over both factors jointly.
pub fn relative_error(inst: &Instance) -> nnfn_core::Result<f64> {
    let (gw, gh) = library_gradients(inst)?;
    let (fw, fh) = finite_difference_gradients(inst);
    let num = ((&gw - &fw).norm_squared() + (&gh - &fh).norm_squared()).sqrt();
    let den = (fw.norm_squared() + fh.norm_squared()).sqrt().max(1e-12);
    Ok(num / den)
}

pub fn gradient_suite(cases: usize, seed: u64, with_laplacian: bool) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ if with_laplacian { 0x61a9 } else { 0x6 });
    let name = if with_laplacian {
        "factored_gradients + Laplacian vs finite differences"
    } else {
        "factored_gradients vs finite differences"
    };
    let mut report = SuiteReport::new(name);
    for _ in 0..cases {
        let inst = random_instance(&mut rng, with_laplacian);
        match relative_error(&inst) {
            Ok(err) => report.record(err, err <= TOL, || {
                format!("{}x{} k={} λ={}: relative error {err:e}", inst.w.nrows(), inst.h.nrows(), inst.w.ncols(), inst.lambda)
            }),
            Err(e) => report.record(f64::INFINITY, false, || e.to_string()),
        }
    }
    report
}
