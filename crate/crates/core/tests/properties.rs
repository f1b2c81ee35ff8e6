use nnfn_core::data::{generate_synthetic, split_observations, synthetic_nnz};
use nnfn_core::linalg::{factored_frobenius_norm, singular_values, sparse_residual, thin_svd};
use nnfn_core::metrics::{nmse, numerical_rank, rmse, EvalMask};
use nnfn_core::regularizers::{prox_nnfn, prox_spectral, regularizer_value, shrink_spectrum};
use nnfn_core::{DenseMatrix, FactorPair, ObservedMatrix, RegularizerKind, RegularizerSpec};
use proptest::prelude::*;

fn matrix(max_dim: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0..10.0f64, r * c)
            .prop_map(move |v| DenseMatrix::from_row_major(r, c, v).unwrap())
    })
}

/// `W·Hᵀ` built by hand, as a reference.
fn dense_product(w: &DenseMatrix, h: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(w.rows(), h.rows(), |i, j| (0..w.cols()).map(|l| w.get(i, l) * h.get(j, l)).sum())
}

fn factor_pair() -> impl Strategy<Value = (DenseMatrix, DenseMatrix)> {
    (1..=8usize, 1..=8usize, 1..=4usize).prop_flat_map(|(m, n, k)| {
        (
            prop::collection::vec(-3.0..3.0f64, m * k),
            prop::collection::vec(-3.0..3.0f64, n * k),
        )
            .prop_map(move |(a, b)| {
                (
                    DenseMatrix::from_row_major(m, k, a).unwrap(),
                    DenseMatrix::from_row_major(n, k, b).unwrap(),
                )
            })
    })
}

fn spectrum() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..20.0f64, 1..8).prop_map(|mut s| {
        s.sort_by(|a, b| b.total_cmp(a));
        s
    })
}

fn spec(kind: RegularizerKind, lambda: f64, theta: f64) -> RegularizerSpec {
    let theta = kind.uses_theta().then_some(theta);
    RegularizerSpec::new(kind, lambda, theta).unwrap()
}

const KINDS: [RegularizerKind; 5] = [
    RegularizerKind::Nuclear,
    RegularizerKind::Nnfn,
    RegularizerKind::CappedL1,
    RegularizerKind::Lsp,
    RegularizerKind::Mcp,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_and_orders(m in matrix(9)) {
        let svd = thin_svd(&m).unwrap();
        let back = svd.reconstruct().unwrap();
        let err = back.sub(&m).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-8 * m.frobenius_norm().max(1.0), "reconstruction error {err}");
        for pair in svd.sigma.windows(2) {
            prop_assert!(pair[0] >= pair[1]);
        }
        prop_assert!(svd.sigma.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn factored_norm_matches_dense((w, h) in factor_pair()) {
        let want = dense_product(&w, &h).frobenius_norm();
        let got = factored_frobenius_norm(&w, &h).unwrap();
        prop_assert!((got - want).abs() <= 1e-10 * want.max(1e-300), "{got} vs {want}");
    }

    #[test]
    fn residual_from_factors_matches_dense((w, h) in factor_pair(), mask in prop::collection::vec(any::<bool>(), 64), vals in prop::collection::vec(-5.0..5.0f64, 64)) {
        let (m, n) = (w.rows(), h.rows());
        let entries: Vec<_> = (0..m * n)
            .filter(|&p| mask[p % 64])
            .map(|p| (p / n, p % n, vals[p % 64]))
            .collect();
        let obs = ObservedMatrix::new(m, n, entries).unwrap();
        let fp = FactorPair::new(w, h).unwrap();
        let a = sparse_residual(&fp, &obs).unwrap();
        let b = sparse_residual(&fp.materialize(), &obs).unwrap();
        prop_assert_eq!(a.row_indices(), b.row_indices());
        let scale = b.values().iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn nnfn_is_nonnegative_with_rank_one_kernel(sigma in spectrum()) {
        let v = regularizer_value(&RegularizerSpec::nnfn(1.0).unwrap(), &sigma).unwrap();
        let positive = sigma.iter().filter(|&&s| s > 0.0).count();
        prop_assert!(v >= -1e-12 * sigma[0].max(1.0));
        if positive <= 1 {
            prop_assert!(v.abs() <= 1e-12 * sigma[0].max(1.0));
        } else {
            prop_assert!(v > 0.0);
        }
    }

    #[test]
    fn shrinkage_keeps_order_and_sign(sigma in spectrum(), lambda in 0.01..10.0f64, theta in 0.1..20.0f64) {
        for kind in KINDS {
            let s = spec(kind, lambda, theta);
            let out = shrink_spectrum(&s, lambda, &sigma).unwrap();
            prop_assert_eq!(out.len(), sigma.len());
            for (i, &t) in out.iter().enumerate() {
                prop_assert!(t >= 0.0 && t <= sigma[i] + 1e-12, "{kind}: {t} vs {}", sigma[i]);
            }
            for pair in out.windows(2) {
                prop_assert!(pair[0] >= pair[1] - 1e-12, "{kind}: {out:?}");
            }
        }
    }

    #[test]
    fn nuclear_shrinks_uniformly(sigma in spectrum(), lambda in 0.0..10.0f64) {
        let out = shrink_spectrum(&RegularizerSpec::nuclear(lambda).unwrap(), lambda, &sigma).unwrap();
        for (s, t) in sigma.iter().zip(&out) {
            prop_assert!((s - t - lambda.min(*s)).abs() <= 1e-12 * s.max(1.0));
        }
    }

    #[test]
    fn prox_output_is_ordered(m in matrix(6), lambda in 0.0..5.0f64, theta in 0.1..10.0f64) {
        for kind in KINDS {
            let x = prox_spectral(&spec(kind, lambda, theta), &m).unwrap();
            let s = singular_values(&x).unwrap();
            for pair in s.windows(2) {
                prop_assert!(pair[0] >= pair[1]);
            }
        }
    }

    #[test]
    fn nmse_of_perturbation_is_its_relative_norm(g in matrix(6), seed in any::<u64>()) {
        let (r, c) = g.shape();
        prop_assume!(r * c >= 2);
        let delta = DenseMatrix::from_fn(r, c, |i, j| (((i * 7 + j * 13) as u64 ^ seed) % 17) as f64 / 8.0 - 1.0);
        let observed = ObservedMatrix::new(r, c, vec![(0, 0, 0.0)]).unwrap();
        let mask = EvalMask::Unobserved(&observed);
        let mut x = g.clone();
        x.axpy(1.0, &delta).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..r {
            for j in 0..c {
                if (i, j) != (0, 0) {
                    num += (x.get(i, j) - g.get(i, j)).powi(2);
                    den += g.get(i, j).powi(2);
                }
            }
        }
        prop_assume!(den > 0.0);
        let got = nmse(&x, &g, mask).unwrap();
        prop_assert!((got - (num / den).sqrt()).abs() <= 1e-12 * got.max(1.0));
    }

    #[test]
    fn rmse_is_zero_only_on_a_match(m in matrix(6), bump in 0.0..1.0f64) {
        let (r, c) = m.shape();
        let entries: Vec<_> = (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).map(|(i, j)| (i, j, m.get(i, j))).collect();
        let test = ObservedMatrix::new(r, c, entries).unwrap();
        prop_assert_eq!(rmse(&m, &test).unwrap(), 0.0);
        let mut x = m.clone();
        x.set(0, 0, m.get(0, 0) + bump);
        let e = rmse(&x, &test).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert_eq!(e == 0.0, bump == 0.0);
    }

    #[test]
    fn nnfn_prox_never_raises_rank((w, h) in factor_pair(), lambda in 0.0..20.0f64) {
        let z = dense_product(&w, &h);
        let before = numerical_rank(&z, 1e-8).unwrap();
        let after = numerical_rank(&prox_nnfn(&z, lambda).unwrap(), 1e-8).unwrap();
        prop_assert!(after <= before, "rank {before} -> {after}");
    }

    #[test]
    fn split_partitions_observations(seed in any::<u64>()) {
        let inst = generate_synthetic(30, 2, 0.1, 1.0, seed).unwrap();
        let obs = inst.observed();
        let (a, b, c) = split_observations(&obs, (0.5, 0.25, 0.25), seed).unwrap();
        prop_assert_eq!(a.nnz() + b.nnz() + c.nnz(), obs.nnz());
        prop_assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
    }
}

#[test]
fn synthetic_generation_is_a_function_of_the_seed() {
    let a = generate_synthetic(60, 3, 0.3, 1.0, 9).unwrap();
    let b = generate_synthetic(60, 3, 0.3, 1.0, 9).unwrap();
    let c = generate_synthetic(60, 3, 0.3, 1.0, 10).unwrap();
    assert_eq!(a.ground_truth, b.ground_truth);
    assert_eq!(a.train, b.train);
    assert_eq!(a.validation, b.validation);
    assert_ne!(a.train, c.train);

    let obs = a.observed();
    let s1 = split_observations(&obs, (0.5, 0.25, 0.25), 4).unwrap();
    let s2 = split_observations(&obs, (0.5, 0.25, 0.25), 4).unwrap();
    assert_eq!(s1, s2);
}

#[test]
fn synthetic_truth_has_rank_k_star() {
    for seed in 0..5 {
        let inst = generate_synthetic(80, 5, 0.1, 1.0, seed).unwrap();
        let sigma = singular_values(&inst.ground_truth).unwrap();
        assert!(sigma[4] > 0.0);
        assert_eq!(numerical_rank(&inst.ground_truth, 1e-8).unwrap(), 5);
    }
}

#[test]
fn observed_counts_match_published_sparsity() {
    for (m, pct) in [(500, 12.43), (1000, 6.91), (2000, 3.80)] {
        let ratio = 100.0 * synthetic_nnz(m, 5, 1.0) as f64 / (m * m) as f64;
        assert_eq!(format!("{ratio:.2}"), format!("{pct:.2}"), "m = {m}");
    }
}
