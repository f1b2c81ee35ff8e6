//! Sequential versus parallel execution of the hot kernels.
//!
//! Built without the `parallel` feature both modes run the same sequential
//! code, which makes the comparison a check of the fallback's overhead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nnfn_core::data::generate_synthetic;
use nnfn_core::experiment::{grid_search, ExperimentConfig, PreparedData, SolverKind};
use nnfn_core::linalg::{leading_svd, sparse_mul_dense, sparse_residual_with};
use nnfn_core::solvers::{initial_factors, solve_factored};
use nnfn_core::{DenseMatrix, Exec, RegularizerSpec, SolverConfig};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn sparse_kernels(c: &mut Criterion) {
    let inst = generate_synthetic(1000, 5, 0.1, 1.0, 1).unwrap();
    let obs = inst.observed();
    let fp = initial_factors(1000, 1000, 5, 2);
    let mut group = c.benchmark_group("sparse_residual");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sparse_residual_with(&fp, &obs, exec).unwrap())
        });
    }
    group.finish();

    let residual = sparse_residual_with(&fp, &obs, Exec::Sequential).unwrap();
    let mut group = c.benchmark_group("sparse_mul_dense");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sparse_mul_dense(&residual, &fp.h, exec).unwrap())
        });
    }
    group.finish();
}

fn svd(c: &mut Criterion) {
    let inst = generate_synthetic(500, 5, 0.1, 1.0, 1).unwrap();
    let x = inst.ground_truth.clone();
    let noisy = DenseMatrix::from_fn(500, 500, |i, j| x.get(i, j) + 0.01 * ((i * 31 + j * 17) % 13) as f64);
    let mut group = c.benchmark_group("leading_svd");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| leading_svd(&noisy, 5, exec).unwrap())
        });
    }
    group.finish();
}

fn factored_solve(c: &mut Criterion) {
    let inst = generate_synthetic(1000, 5, 0.1, 1.0, 1).unwrap();
    let obs = inst.observed();
    let mut group = c.benchmark_group("factored_solve_m1000");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SolverConfig {
            regularizer: RegularizerSpec::nnfn(0.1).unwrap(),
            stepsize: 0.01,
            rank_k: 5,
            max_iters: 20,
            exec,
            ..SolverConfig::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| solve_factored(&obs, &cfg, None).unwrap())
        });
    }
    group.finish();
}

fn grid(c: &mut Criterion) {
    let mut cfg = ExperimentConfig {
        m: 300,
        solver: SolverKind::Factored,
        lambda: vec![0.01, 0.1, 1.0, 10.0],
        step: vec![0.01],
        rank_k: vec![5],
        ..ExperimentConfig::default()
    };
    let data = PreparedData::synthetic(&cfg, 1).unwrap();
    let mut group = c.benchmark_group("grid_search_4_points");
    group.sample_size(10);
    for (name, exec) in MODES {
        cfg.exec = exec;
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| grid_search(&cfg, &data, None, 1).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sparse_kernels, svd, factored_solve, grid);
criterion_main!(benches);
