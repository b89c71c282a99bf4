//! `simulate` and `benchmark`.

use std::collections::BTreeSet;
use std::path::Path;

use mvlink::simulation::{
    self, gen_model1, gen_model2, make_truth, quantile, run_benchmark, BenchmarkConfig,
    BenchmarkResult, Method, Metric, SimConfig, SimModel,
};
use mvlink::{tuning, FitConfig};
use serde::Serialize;

use crate::args::{BenchmarkArgs, DesignArgs, SimulateArgs};
use crate::config::{pick, pick_switch, FileConfig};
use crate::error::CliError;
use crate::io::{default_names, write_json, write_records, write_table};
use crate::Common;

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const FAILURES_FILE: &str = "failures.csv";
pub const BENCHMARK_MANIFEST: &str = "benchmark.json";
pub const TRUTH_FILE: &str = "truth.json";

const DEFAULT_N: usize = 100;
const DEFAULT_P: usize = 50;
const DEFAULT_Q: usize = 10;
const DEFAULT_REPLICATIONS: usize = 20;

struct Design {
    model: SimModel,
    n: usize,
    p: usize,
    q: usize,
    gamma_sq: f64,
}

fn resolve_design(args: &DesignArgs, file: &FileConfig) -> Design {
    let model = match pick(args.model, &file.model, 1) {
        2 => SimModel::Two,
        _ => SimModel::One,
    };
    Design {
        model,
        n: pick(args.n, &file.n, DEFAULT_N),
        p: pick(args.p, &file.p, DEFAULT_P),
        q: pick(args.q, &file.q, DEFAULT_Q),
        gamma_sq: pick(args.gamma_sq, &file.gamma_sq, simulation::DEFAULT_GAMMA_SQ),
    }
}

fn check_model_id(file: &FileConfig) -> Result<(), CliError> {
    match file.model {
        None | Some(1) | Some(2) => Ok(()),
        Some(other) => Err(CliError::Input(format!("model must be 1 or 2, got {other}"))),
    }
}

#[derive(Serialize)]
struct TruthManifest {
    schema_version: &'static str,
    model: String,
    n: usize,
    p: usize,
    q: usize,
    sigma_u_sq: f64,
    gamma_sq: f64,
    ar_rho: f64,
    seed: u64,
    nonzero_coefficients: usize,
    files: Vec<&'static str>,
}

pub fn run_simulate(common: &Common, file: &FileConfig, args: &SimulateArgs) -> Result<(), CliError> {
    check_model_id(file)?;
    let design = resolve_design(&args.design, file);
    let mut config = SimConfig::new(
        design.model,
        design.n,
        design.p,
        design.q,
        pick(args.sigma_u_sq, &file.sigma_u_sq, 0.0),
        common.seed,
    );
    config.gamma_sq = design.gamma_sq;
    config.ar_rho = pick(args.rho, &file.rho, design.model.default_ar_rho());
    config.validate()?;
    let truth = make_truth(&config)?;
    let (x, y, z) = match config.model {
        SimModel::One => {
            let (x, y) = gen_model1(&config, &truth)?;
            (x, y, None)
        }
        SimModel::Two => {
            let (x, y, z) = gen_model2(&config, &truth)?;
            (x, y, Some(z))
        }
    };

    let dir = &common.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let x_names = default_names("x", config.p);
    let y_names = default_names("y", config.q);
    write_table(&dir.join("X.csv"), &x_names, &x, None)?;
    write_table(&dir.join("Y.csv"), &y_names, &y, None)?;
    write_table(&dir.join("beta_star.csv"), &y_names, &truth.beta_star, None)?;
    let mut files = vec!["X.csv", "Y.csv", "beta_star.csv"];
    if let Some(z) = z {
        write_table(&dir.join("Z.csv"), &default_names("z", config.p), &z, None)?;
        files.push("Z.csv");
    }
    let manifest = TruthManifest {
        schema_version: crate::fit::SCHEMA_VERSION,
        model: config.model.label().into(),
        n: config.n,
        p: config.p,
        q: config.q,
        sigma_u_sq: config.sigma_u_sq,
        gamma_sq: config.gamma_sq,
        ar_rho: config.ar_rho,
        seed: config.seed,
        nonzero_coefficients: truth.support.iter().filter(|&&s| s).count(),
        files,
    };
    write_json(&dir.join(TRUTH_FILE), &manifest)
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>, CliError> {
    let mut methods = Vec::new();
    for name in names {
        let method = Method::parse(name.trim())
            .ok_or_else(|| CliError::Input(format!("unknown method {name:?}")))?;
        if !methods.contains(&method) {
            methods.push(method);
        }
    }
    if methods.is_empty() {
        return Err(CliError::Input("no methods selected".into()));
    }
    Ok(methods)
}

#[derive(Serialize)]
struct BenchmarkManifest {
    schema_version: &'static str,
    model: String,
    n: usize,
    p: usize,
    q: usize,
    gamma_sq: f64,
    sigma_u_values: Vec<f64>,
    replications: usize,
    seed: u64,
    jobs: usize,
    methods: Vec<&'static str>,
    n_test: usize,
    folds: usize,
    num_lambdas: usize,
    delta: f64,
    taus: Vec<f64>,
    tol: f64,
    max_iter: usize,
    records: usize,
    failures: usize,
    files: Vec<String>,
}

fn resolve_benchmark(
    common: &Common,
    file: &FileConfig,
    args: &BenchmarkArgs,
) -> Result<BenchmarkConfig, CliError> {
    check_model_id(file)?;
    let design = resolve_design(&args.design, file);
    let mut solver = FitConfig::new(1.0, 0.0);
    solver.tol = pick(args.tol, &file.tol, FitConfig::DEFAULT_TOL);
    solver.max_iter = pick(args.max_iter, &file.max_iter, FitConfig::DEFAULT_MAX_ITER);
    let methods = match args.methods.as_ref().or(file.methods.as_ref()) {
        Some(names) => parse_methods(names)?,
        None => Method::ALL.to_vec(),
    };
    let config = BenchmarkConfig {
        model: design.model,
        n: design.n,
        p: design.p,
        q: design.q,
        gamma_sq: design.gamma_sq,
        sigma_u_values: pick(
            args.sigma_u.clone(),
            &file.sigma_u,
            simulation::DEFAULT_SIGMA_U_VALUES.to_vec(),
        ),
        replications: pick(args.replications, &file.replications, DEFAULT_REPLICATIONS),
        seed: common.seed,
        methods,
        n_test: pick(args.n_test, &file.n_test, simulation::DEFAULT_TEST_SIZE),
        folds: pick(args.grid.folds, &file.folds, tuning::DEFAULT_FOLDS),
        num_lambdas: pick(args.grid.num_lambdas, &file.num_lambdas, tuning::DEFAULT_NUM_LAMBDAS),
        delta: pick(args.grid.delta, &file.delta, tuning::DEFAULT_DELTA),
        taus: pick(args.grid.taus.clone(), &file.taus, tuning::default_taus()),
        jobs: common.jobs,
        solver,
    };
    if config.sigma_u_values.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(CliError::Input("noise variances must be nonnegative".into()));
    }
    Ok(config)
}

const QUANTILES: [(&str, f64); 5] = [("q10", 0.1), ("q25", 0.25), ("median", 0.5), ("q75", 0.75), ("q90", 0.9)];

fn summary_rows(config: &BenchmarkConfig, result: &BenchmarkResult) -> Vec<Vec<String>> {
    let metrics: BTreeSet<_> = result.records.iter().map(|r| r.metric).collect();
    let mut rows = Vec::new();
    for &sigma in &config.sigma_u_values {
        for &method in &config.methods {
            for &metric in Metric::ALL.iter().filter(|m| metrics.contains(m)) {
                let values = result.values(method, sigma, metric);
                if values.is_empty() {
                    continue;
                }
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let mut row = vec![
                    sigma.to_string(),
                    method.label().to_string(),
                    metric.label().to_string(),
                    values.len().to_string(),
                    mean.to_string(),
                ];
                row.extend(QUANTILES.iter().map(|(_, p)| quantile(&values, *p).unwrap_or(f64::NAN).to_string()));
                rows.push(row);
            }
        }
    }
    rows
}

/// One gnuplot block per method: `sigma_u_sq median q25 q75`.
fn write_plot(path: &Path, config: &BenchmarkConfig, result: &BenchmarkResult, metric: Metric) -> Result<(), CliError> {
    let mut text = format!("# {} by noise variance; columns: sigma_u_sq median q25 q75\n", metric.label());
    for &method in &config.methods {
        text.push_str(&format!("\n\n# {}\n", method.label()));
        for &sigma in &config.sigma_u_values {
            let values = result.values(method, sigma, metric);
            if let (Some(med), Some(lo), Some(hi)) =
                (quantile(&values, 0.5), quantile(&values, 0.25), quantile(&values, 0.75))
            {
                text.push_str(&format!("{sigma} {med} {lo} {hi}\n"));
            }
        }
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn run_benchmark_command(
    common: &Common,
    file: &FileConfig,
    args: &BenchmarkArgs,
) -> Result<(), CliError> {
    let config = resolve_benchmark(common, file, args)?;
    let plots = pick_switch(args.plots, file.plots, false);
    let dir = &common.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;

    let result = run_benchmark(&config)?;

    let records = result.records.iter().map(|r| {
        vec![
            r.replication.to_string(),
            r.model.label().to_string(),
            r.sigma_u_sq.to_string(),
            r.method.label().to_string(),
            r.metric.label().to_string(),
            r.value.to_string(),
        ]
    });
    write_records(
        &dir.join(RECORDS_FILE),
        &["replication", "model", "sigma_u_sq", "method", "metric", "value"],
        records,
    )?;
    let mut summary_header = vec!["sigma_u_sq", "method", "metric", "count", "mean"];
    summary_header.extend(QUANTILES.iter().map(|(name, _)| *name));
    write_records(&dir.join(SUMMARY_FILE), &summary_header, summary_rows(&config, &result))?;
    let failures = result.failures.iter().map(|f| {
        vec![
            f.replication.to_string(),
            f.sigma_u_sq.to_string(),
            f.method.label().to_string(),
            f.message.clone(),
        ]
    });
    write_records(
        &dir.join(FAILURES_FILE),
        &["replication", "sigma_u_sq", "method", "message"],
        failures,
    )?;

    let mut files: Vec<String> = [RECORDS_FILE, SUMMARY_FILE, FAILURES_FILE].map(String::from).to_vec();
    if plots {
        let metrics: BTreeSet<_> = result.records.iter().map(|r| r.metric).collect();
        for metric in Metric::ALL.iter().filter(|m| metrics.contains(m)) {
            let name = format!("plot_{}.dat", metric.label());
            write_plot(&dir.join(&name), &config, &result, *metric)?;
            files.push(name);
        }
    }

    let manifest = BenchmarkManifest {
        schema_version: crate::fit::SCHEMA_VERSION,
        model: config.model.label().into(),
        n: config.n,
        p: config.p,
        q: config.q,
        gamma_sq: config.gamma_sq,
        sigma_u_values: config.sigma_u_values.clone(),
        replications: config.replications,
        seed: config.seed,
        jobs: config.jobs,
        methods: config.methods.iter().map(|m| m.label()).collect(),
        n_test: config.n_test,
        folds: config.folds,
        num_lambdas: config.num_lambdas,
        delta: config.delta,
        taus: config.taus.clone(),
        tol: config.solver.tol,
        max_iter: config.solver.max_iter,
        records: result.records.len(),
        failures: result.failures.len(),
        files,
    };
    write_json(&dir.join(BENCHMARK_MANIFEST), &manifest)?;
    for f in &result.failures {
        eprintln!(
            "warning: {} failed on replication {} (sigma_u_sq = {}): {}",
            f.method.label(),
            f.replication,
            f.sigma_u_sq,
            f.message
        );
    }
    Ok(())
}
