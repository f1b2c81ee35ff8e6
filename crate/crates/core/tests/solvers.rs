use nnfn_core::data::generate_synthetic;
use nnfn_core::linalg::singular_values;
use nnfn_core::regularizers::regularizer_value;
use nnfn_core::solvers::{
    factored_gradients, factored_objective, full_objective, initial_factors, proximal_step, solve_factored,
    DEFAULT_ZERO_GUARD,
};
use nnfn_core::{DenseMatrix, ObservedMatrix, RegularizerSpec, SolveStatus, SolverConfig};
use proptest::prelude::*;

/// Runs the factored solver, halving the step until the trace never rises
/// by more than `1e-10` (at most 20 halvings). Returns the accepted step and
/// final status.
fn descend(obs: &ObservedMatrix, lambda: f64, k: usize, seed: u64) -> Result<(f64, SolveStatus), String> {
    let mut step = 0.1;
    for _ in 0..=20 {
        let cfg = SolverConfig {
            regularizer: RegularizerSpec::nnfn(lambda).unwrap(),
            stepsize: step,
            rank_k: k,
            seed,
            ..SolverConfig::default()
        };
        let (_, trace) = solve_factored(obs, &cfg, None).map_err(|e| e.to_string())?;
        let objs: Vec<f64> = trace.objectives().collect();
        if trace.status != SolveStatus::NumericalFailure && objs.windows(2).all(|p| p[1] <= p[0] + 1e-10) {
            return Ok((step, trace.status));
        }
        step /= 2.0;
    }
    Err("no stepsize gave a monotone trace".into())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn factored_objective_descends(seed in any::<u64>(), m in 15..40usize, k in 1..5usize, lambda in 0.01..2.0f64) {
        let inst = generate_synthetic(m, 2, 0.1, 1.0, seed).unwrap();
        let (_, status) = descend(&inst.observed(), lambda, k, seed).map_err(TestCaseError::fail)?;
        prop_assert_eq!(status, SolveStatus::Converged);
    }

    #[test]
    fn factored_objective_bounds_full_objective(seed in any::<u64>(), lambda in 0.0..3.0f64) {
        // ‖X‖_* ≤ (‖W‖² + ‖H‖²)/2 for every factorization X = W·Hᵀ
        let inst = generate_synthetic(12, 2, 0.1, 1.0, seed).unwrap();
        let obs = inst.observed();
        let fp = initial_factors(12, 12, 3, seed);
        let f = factored_objective(&fp, &obs, lambda).unwrap();
        let full = full_objective(&fp.materialize(), &obs, &RegularizerSpec::nnfn(lambda).unwrap()).unwrap();
        prop_assert!(full <= f + 1e-8 * f.abs().max(1.0), "{full} > {f}");
    }
}

#[test]
fn converged_factored_solution_is_consistent_with_full_objective() {
    let inst = generate_synthetic(20, 2, 0.05, 1.5, 3).unwrap();
    let obs = inst.observed();
    let lambda = 0.2;
    let cfg = SolverConfig {
        regularizer: RegularizerSpec::nnfn(lambda).unwrap(),
        stepsize: 0.02,
        rank_k: 2,
        rel_tol: 1e-15,
        max_iters: 200_000,
        seed: 3,
        ..SolverConfig::default()
    };
    let (fp, _) = solve_factored(&obs, &cfg, None).unwrap();
    let (gw, gh) = factored_gradients(&fp, &obs, lambda, DEFAULT_ZERO_GUARD).unwrap();
    let grad = (gw.frobenius_norm_sq() + gh.frobenius_norm_sq()).sqrt();
    assert!(grad <= 1e-6, "gradient norm {grad}");
    let f = factored_objective(&fp, &obs, lambda).unwrap();
    let full = full_objective(&fp.materialize(), &obs, &RegularizerSpec::nnfn(lambda).unwrap()).unwrap();
    assert!(full <= f + 1e-8, "full {full} vs factored {f}");
}

fn prox_objective(spec: &RegularizerSpec, weight: f64, x: &DenseMatrix, z: &DenseMatrix) -> f64 {
    let sigma = singular_values(x).unwrap();
    0.5 * x.sub(z).unwrap().frobenius_norm_sq() + weight * regularizer_value(spec, &sigma).unwrap()
}

#[test]
fn proximal_iterates_minimize_the_prox_objective() {
    let inst = generate_synthetic(25, 3, 0.1, 1.0, 5).unwrap();
    let obs = inst.observed();
    let eta = 1.0;
    let kinds = [
        RegularizerSpec::nuclear(1.5).unwrap(),
        RegularizerSpec::nnfn(1.5).unwrap(),
        RegularizerSpec::capped_l1(1.5, 4.0).unwrap(),
        RegularizerSpec::lsp(1.5, 2.0).unwrap(),
        RegularizerSpec::mcp(1.5, 3.0).unwrap(),
    ];
    for spec in kinds {
        let weight = eta * spec.lambda;
        let mut x = DenseMatrix::zeros(25, 25);
        for t in 0..15 {
            let (z, prox) = proximal_step(&x, &obs, &spec, eta, None).unwrap();
            let at = prox_objective(&spec, weight, &prox.matrix, &z);
            for (name, other) in [("Z", &z), ("X_prev", &x), ("0", &DenseMatrix::zeros(25, 25))] {
                let alt = prox_objective(&spec, weight, other, &z);
                assert!(at <= alt + 1e-9 * alt.abs().max(1.0), "{} step {t}: {at} > {alt} at {name}", spec.kind);
            }
            x = prox.matrix;
        }
    }
}
