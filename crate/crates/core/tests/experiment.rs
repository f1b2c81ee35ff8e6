use nnfn_core::experiment::{
    grid_points, grid_search, read_trace, run_experiment, ExperimentConfig, PreparedData, SolverKind, TRACE_HEADER,
};
use nnfn_core::{Error, RegularizerKind, SolveStatus};
use tempfile::TempDir;

fn small(out: &TempDir) -> ExperimentConfig {
    ExperimentConfig {
        m: 60,
        k_star: 3,
        lambda: vec![0.01, 0.1, 1.0],
        step: vec![0.01],
        rank_k: vec![3, 6],
        seed: vec![1, 2],
        out: out.path().to_path_buf(),
        ..ExperimentConfig::default()
    }
}

#[test]
fn same_config_gives_identical_numbers() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let ra = run_experiment(&small(&a)).unwrap().summary;
    let rb = run_experiment(&small(&b)).unwrap().summary;
    assert_eq!(ra.mean, rb.mean);
    assert_eq!(ra.stddev, rb.stddev);
    for (x, y) in ra.runs.iter().zip(&rb.runs) {
        assert_eq!(x.selected, y.selected);
        assert_eq!(x.report.as_ref().map(|r| r.value), y.report.as_ref().map(|r| r.value));
        let tx = read_trace(x.trace_file.as_ref().unwrap()).unwrap();
        let ty = read_trace(y.trace_file.as_ref().unwrap()).unwrap();
        let strip = |t: Vec<nnfn_core::TraceRecord>| t.into_iter().map(|r| (r.iter, r.objective, r.rank)).collect::<Vec<_>>();
        assert_eq!(strip(tx), strip(ty));
    }
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let mut seq = small(&a);
    seq.exec = nnfn_core::Exec::Sequential;
    let mut par = small(&b);
    par.exec = nnfn_core::Exec::Parallel;
    let (rs, rp) = (run_experiment(&seq).unwrap().summary, run_experiment(&par).unwrap().summary);
    assert_eq!(rs.mean, rp.mean);
    assert_eq!(rs.stddev, rp.stddev);
}

#[test]
fn summary_matches_per_run_files() {
    let dir = TempDir::new().unwrap();
    let cfg = small(&dir);
    run_experiment(&cfg).unwrap();
    let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    let runs = json["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    let values: Vec<f64> = runs.iter().map(|r| r["report"]["value"].as_f64().unwrap()).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    assert!((json["mean"].as_f64().unwrap() - mean).abs() <= 1e-15);
    assert!((json["stddev"].as_f64().unwrap() - var.sqrt()).abs() <= 1e-15);
    for r in runs {
        let trace = read_trace(r["trace_file"].as_str().unwrap()).unwrap();
        let last = trace.last().unwrap();
        assert_eq!(last.iter as u64, r["iterations"].as_u64().unwrap());
        assert_eq!(last.elapsed_s, r["report"]["wall_time_seconds"].as_f64().unwrap());
        let grid = std::fs::read_to_string(r["grid_file"].as_str().unwrap()).unwrap();
        assert_eq!(grid.lines().count(), 1 + cfg.grid_len());
    }
    let trace_text = std::fs::read_to_string(dir.path().join("trace_seed1.csv")).unwrap();
    assert_eq!(trace_text.lines().next().unwrap(), TRACE_HEADER);
}

#[test]
fn grid_report_has_one_row_per_combination() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small(&dir);
    let data = PreparedData::synthetic(&cfg, 1).unwrap();
    let report = grid_search(&cfg, &data, None, 1).unwrap();
    assert_eq!(report.rows.len(), 3 * 2);

    // θ is a grid axis only for the kinds that use it
    cfg.solver = SolverKind::Proximal;
    cfg.reg = RegularizerKind::Lsp;
    cfg.theta = vec![1.0, 10.0];
    cfg.step = vec![0.5, 1.0];
    cfg.rank_k = vec![4];
    cfg.max_iters = 5;
    let report = grid_search(&cfg, &data, None, 1).unwrap();
    assert_eq!(report.rows.len(), 3 * 2 * 2);
    let points: Vec<_> = report.rows.iter().map(|r| r.point).collect();
    assert_eq!(points, grid_points(&cfg));
}

#[test]
fn grid_search_selects_the_validation_minimizer() {
    let dir = TempDir::new().unwrap();
    let cfg = ExperimentConfig {
        lambda: vec![0.001, 50.0],
        rank_k: vec![3],
        ..small(&dir)
    };
    let data = PreparedData::synthetic(&cfg, 1).unwrap();
    let report = grid_search(&cfg, &data, None, 1).unwrap();
    let vals: Vec<f64> = report.rows.iter().map(|r| r.val_metric.unwrap()).collect();
    let argmin = if vals[0] <= vals[1] { 0 } else { 1 };
    assert_eq!(report.best, argmin);

    let single = ExperimentConfig {
        lambda: vec![0.1],
        ..cfg
    };
    let report = grid_search(&single, &data, None, 1).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.best_row().point, grid_points(&single)[0]);
}

#[test]
fn selected_point_is_close_to_the_best_fixed_point() {
    let dir = TempDir::new().unwrap();
    let cfg = ExperimentConfig {
        m: 200,
        k_star: 5,
        lambda: vec![0.01, 0.1, 1.0, 10.0],
        step: vec![0.005, 0.01],
        rank_k: vec![2, 5, 10],
        seed: vec![1],
        ..small(&dir)
    };
    let data = PreparedData::synthetic(&cfg, 1).unwrap();
    let report = grid_search(&cfg, &data, None, 1).unwrap();
    let best_test = report
        .rows
        .iter()
        .filter_map(|r| r.test_metric)
        .fold(f64::INFINITY, f64::min);
    let chosen = report.best_row().test_metric.unwrap();
    assert!(chosen <= best_test + 0.002, "selected {chosen}, best fixed {best_test}");
}

#[test]
fn zero_lambda_is_plain_factorization() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let base = |out: &TempDir, reg| ExperimentConfig {
        lambda: vec![0.0],
        rank_k: vec![3],
        seed: vec![4],
        reg,
        allow_out_of_range: true,
        ..small(out)
    };
    let nnfn = run_experiment(&base(&a, RegularizerKind::Nnfn)).unwrap().summary;
    let nuclear = run_experiment(&base(&b, RegularizerKind::Nuclear)).unwrap().summary;
    assert_eq!(nnfn.mean, nuclear.mean);
    assert!(nnfn.runs[0].grid_file.is_none());
}

#[test]
fn numerical_failure_is_recorded_not_fatal() {
    let dir = TempDir::new().unwrap();
    let cfg = ExperimentConfig {
        lambda: vec![0.1],
        step: vec![1.0],
        rank_k: vec![3],
        ..small(&dir)
    };
    let outcome = run_experiment(&cfg).unwrap();
    for run in &outcome.summary.runs {
        assert!(run.status == Some(SolveStatus::NumericalFailure) || run.error.is_some());
        assert!(run.report.is_none());
    }
    assert_eq!(outcome.summary.completed, 0);
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn config_errors_name_the_field() {
    let mut cfg = ExperimentConfig::default();
    match cfg.set("lambda", "0.1,abc") {
        Err(Error::Config { field, .. }) => assert_eq!(field, "lambda"),
        other => panic!("expected a config error, got {other:?}"),
    }
    cfg.set("lambda", "500").unwrap();
    match cfg.validate() {
        Err(Error::Config { field, .. }) => assert_eq!(field, "lambda"),
        other => panic!("expected a config error, got {other:?}"),
    }
    cfg.set("allow-out-of-range", "true").unwrap();
    cfg.validate().unwrap();

    let text = ExperimentConfig::default().to_toml_string();
    let back = ExperimentConfig::from_toml_str(&text).unwrap();
    assert_eq!(back.to_toml_string(), text);
}
