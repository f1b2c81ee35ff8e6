//! `nnfn`: experiment runner for NNFN matrix completion.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nnfn_core::data::write_dense_csv;
use nnfn_core::experiment::{
    grid_search, load_configured_triplets, load_laplacian, run_experiment, DataSource, ExperimentConfig,
    ExperimentSummary, Model, PreparedData,
};
use nnfn_core::Error;

#[derive(Parser)]
#[command(name = "nnfn", version, about = "Low-rank matrix completion with the NNFN regularizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic low-rank data, tune, solve and score each seed.
    Synth(ConfigArgs),
    /// Complete a triplet file; writes the recovered model per seed.
    Complete(ConfigArgs),
    /// Grid search only: score every grid point on each seed.
    Grid(ConfigArgs),
    /// Run the brute-force oracle suites and print pass/fail per suite.
    ProxCheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the effective configuration as TOML.
    Config(ConfigArgs),
}

/// A config file plus one flag per config key. List values are
/// comma-separated, e.g. `--lambda 0.01,0.1,1`.
#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// synthetic | triplets
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    k_star: Option<String>,
    #[arg(long)]
    noise_std: Option<String>,
    #[arg(long)]
    multiplier: Option<String>,
    /// `row,col,value` file.
    #[arg(long)]
    triplets: Option<String>,
    #[arg(long)]
    rows: Option<String>,
    #[arg(long)]
    cols: Option<String>,
    #[arg(long)]
    one_based: Option<String>,
    /// Train, validation and test fractions.
    #[arg(long)]
    split: Option<String>,
    /// proximal | factored
    #[arg(long)]
    solver: Option<String>,
    /// nuclear | nnfn | capped-l1 | lsp | mcp
    #[arg(long)]
    reg: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    step: Option<String>,
    /// Factor width (factored) or SVD rank cap, 0 = none (proximal).
    #[arg(long)]
    rank_k: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    #[arg(long)]
    eval_every: Option<String>,
    #[arg(long)]
    zero_guard_eps: Option<String>,
    #[arg(long)]
    rank_tol: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// NMSE | RMSE
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    refit: Option<String>,
    /// Affinity matrix as a dense CSV grid.
    #[arg(long)]
    laplacian: Option<String>,
    #[arg(long)]
    laplacian_weight: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// parallel | sequential
    #[arg(long)]
    exec: Option<String>,
    #[arg(long)]
    allow_out_of_range: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 29] {
        [
            ("data", &self.data),
            ("m", &self.m),
            ("k-star", &self.k_star),
            ("noise-std", &self.noise_std),
            ("multiplier", &self.multiplier),
            ("triplets", &self.triplets),
            ("rows", &self.rows),
            ("cols", &self.cols),
            ("one-based", &self.one_based),
            ("split", &self.split),
            ("solver", &self.solver),
            ("reg", &self.reg),
            ("lambda", &self.lambda),
            ("step", &self.step),
            ("rank-k", &self.rank_k),
            ("theta", &self.theta),
            ("tol", &self.tol),
            ("max-iters", &self.max_iters),
            ("eval-every", &self.eval_every),
            ("zero-guard-eps", &self.zero_guard_eps),
            ("rank-tol", &self.rank_tol),
            ("seed", &self.seed),
            ("metric", &self.metric),
            ("refit", &self.refit),
            ("laplacian", &self.laplacian),
            ("laplacian-weight", &self.laplacian_weight),
            ("out", &self.out),
            ("exec", &self.exec),
            ("allow-out-of-range", &self.allow_out_of_range),
        ]
    }

    /// File (or defaults), then `forced` settings, then flags.
    fn resolve(&self, forced: &[(&str, &str)]) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        for (key, value) in forced {
            cfg.set(key, value)?;
        }
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => args.resolve(&[("data", "synthetic")]).and_then(|cfg| experiment(&cfg, false)),
        Command::Complete(args) => args.resolve(&[("data", "triplets")]).and_then(|cfg| experiment(&cfg, true)),
        Command::Grid(args) => args.resolve(&[]).and_then(|cfg| grid(&cfg)),
        Command::ProxCheck { seed } => return prox_check(seed),
        Command::Config(args) => args.resolve(&[]).map(|cfg| print!("{}", cfg.to_toml_string())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn experiment(cfg: &ExperimentConfig, write_models: bool) -> Result<(), Error> {
    let outcome = run_experiment(cfg)?;
    print_summary(&outcome.summary);
    if write_models {
        for (run, model) in outcome.summary.runs.iter().zip(&outcome.models) {
            if let Some(model) = model {
                for path in write_model(&cfg.out, run.seed, model)? {
                    println!("wrote {}", path.display());
                }
            }
        }
    }
    println!("wrote {}", cfg.out.join("summary.json").display());
    Ok(())
}

fn print_summary(summary: &ExperimentSummary) {
    let metric = format!("{:?}", summary.metric).to_uppercase();
    for run in &summary.runs {
        match (&run.report, &run.error) {
            (Some(r), _) => {
                let point = run.selected.map(|p| {
                    let theta = p.theta.map(|t| format!(" theta={t}")).unwrap_or_default();
                    format!("lambda={} step={} rank-k={}{theta}", p.lambda, p.step, p.rank_k)
                });
                println!(
                    "seed {}: {metric} {:.6}  rank {}  {:.3}s  {} iters  [{}]",
                    run.seed,
                    r.value,
                    r.recovered_rank,
                    r.wall_time_seconds,
                    run.iterations,
                    point.unwrap_or_default()
                );
            }
            (None, Some(e)) => println!("seed {}: failed: {e}", run.seed),
            (None, None) => println!("seed {}: no result ({:?})", run.seed, run.status),
        }
    }
    match (summary.mean, summary.stddev) {
        (Some(m), Some(s)) => println!(
            "{metric} {m:.6} ± {s:.6} over {} of {} seeds, mean time {:.3}s",
            summary.completed,
            summary.runs.len(),
            summary.mean_wall_time_s.unwrap_or(f64::NAN)
        ),
        _ => println!("no seed completed"),
    }
}

fn write_model(out: &Path, seed: u64, model: &Model) -> Result<Vec<PathBuf>, Error> {
    let files = match model {
        Model::Dense(x) => vec![(out.join(format!("model_seed{seed}_x.csv")), x)],
        Model::Factored(fp) => vec![
            (out.join(format!("model_seed{seed}_w.csv")), &fp.w),
            (out.join(format!("model_seed{seed}_h.csv")), &fp.h),
        ],
    };
    for (path, m) in &files {
        write_dense_csv(path, m)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

fn grid(cfg: &ExperimentConfig) -> Result<(), Error> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::Io { path: cfg.out.clone(), source: e })?;
    let laplacian = load_laplacian(cfg)?;
    let triplets = match cfg.data {
        DataSource::Triplets => Some(load_configured_triplets(cfg)?),
        DataSource::Synthetic => None,
    };
    for &seed in &cfg.seed {
        let data = match &triplets {
            Some(obs) => PreparedData::split(obs, &cfg.split, seed)?,
            None => PreparedData::synthetic(cfg, seed)?,
        };
        let report = grid_search(cfg, &data, laplacian.as_ref(), seed)?;
        let path = cfg.out.join(format!("grid_seed{seed}.csv"));
        std::fs::write(&path, report.to_csv()).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        let best = report.best_row();
        println!(
            "seed {seed}: best lambda={} step={} rank-k={}{} val {:.6} test {:.6} ({} points, wrote {})",
            best.point.lambda,
            best.point.step,
            best.point.rank_k,
            best.point.theta.map(|t| format!(" theta={t}")).unwrap_or_default(),
            best.val_metric.unwrap_or(f64::NAN),
            best.test_metric.unwrap_or(f64::NAN),
            report.rows.len(),
            path.display()
        );
    }
    Ok(())
}

fn prox_check(seed: u64) -> ExitCode {
    let reports = nnfn_oracles::all_suites(seed);
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    if failed == 0 {
        println!("all {} suites passed", reports.len());
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} suites failed", reports.len());
        ExitCode::FAILURE
    }
}
