//! `fit`, `cv` and `predict`.

use std::path::{Path, PathBuf};

use mvlink::tuning::{self, fit_cv, refine_grid};
use mvlink::{
    build_grid, center_data, lambda_max, predict, solve, CVResult, CvOptions, DMatrix, DVector,
    FitConfig, FittedModel, LossKind, PenaltySpec, RegressionData, TuningGrid,
};
use serde::{Deserialize, Serialize};

use crate::args::{CvArgs, DataArgs, FitArgs, GridArgs, PenaltyKind, PredictArgs, SolverArgs};
use crate::config::{pick, pick_switch, FileConfig};
use crate::error::CliError;
use crate::io::{read_mask, read_table, write_json, write_records, write_table};
use crate::Common;

pub const SCHEMA_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BETA_FILE: &str = "beta.csv";
pub const MU_FILE: &str = "mu.csv";
pub const ETA_FILE: &str = "eta.csv";
pub const SURFACE_FILE: &str = "cv_surface.csv";
pub const FOLDS_FILE: &str = "cv_folds.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

const DEFAULT_L1_WEIGHT: f64 = 1.0;
const DEFAULT_GROUP_WEIGHT: f64 = 1.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Inputs {
    pub x: PathBuf,
    pub y: PathBuf,
    pub v: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub k: Option<usize>,
    pub missing_entries: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Names {
    pub predictors: Vec<String>,
    pub responses: Vec<String>,
    pub covariates: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSettings {
    /// `null` means the curvature bound at the starting point.
    pub t0: Option<f64>,
    pub step_growth: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub accelerate: bool,
    pub loss: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: usize,
    pub num_lambdas: usize,
    pub delta: f64,
    pub taus: Vec<f64>,
    pub refine: bool,
    pub best_tau: f64,
    pub best_lambda: f64,
    pub min_error: f64,
    pub surface_file: String,
    pub folds_file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub tau: f64,
    pub lambda: f64,
    pub lambda_max: f64,
    /// `lambda >= lambda_max`: the estimate is identically zero.
    pub at_lambda_max_boundary: bool,
    pub iterations: usize,
    pub final_objective: Option<f64>,
    pub converged: bool,
    pub nonzero_coefficients: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Files {
    pub beta: String,
    pub mu: String,
    pub eta: Option<String>,
}

/// Everything `predict` needs, plus the settings that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub schema_version: String,
    pub command: String,
    pub seed: u64,
    pub jobs: usize,
    pub inputs: Inputs,
    pub names: Names,
    pub penalty: PenaltySpec,
    pub solver: SolverSettings,
    pub cv: Option<CvSummary>,
    pub fit: Option<FitSummary>,
    pub files: Option<Files>,
}

struct Loaded {
    data: RegressionData,
    inputs: Inputs,
    names: Names,
}

fn load_data(args: &DataArgs) -> Result<Loaded, CliError> {
    let x = read_table(&args.x, false)?;
    let y = read_table(&args.y, true)?;
    let v = args.v.as_deref().map(|p| read_table(p, false)).transpose()?;
    let mut mask = y.observed.clone();
    if let Some(path) = &args.mask {
        let file_mask = read_mask(path)?;
        if file_mask.shape() != y.values.shape() {
            return Err(CliError::Input(format!(
                "{}: mask is {}x{}, responses are {}x{}",
                path.display(),
                file_mask.nrows(),
                file_mask.ncols(),
                y.values.nrows(),
                y.values.ncols()
            )));
        }
        mask = Some(match mask {
            Some(m) => m.zip_map(&file_mask, |a, b| a && b),
            None => file_mask,
        });
    }
    // A mask with every cell observed is the complete-data problem.
    if mask.as_ref().is_some_and(|m| m.iter().all(|&o| o)) {
        mask = None;
    }
    let missing_entries = mask.as_ref().map_or(0, |m| m.iter().filter(|&&o| !o).count());
    let data = center_data(&x.values, &y.values, v.as_ref().map(|t| &t.values), mask.as_ref())?;
    Ok(Loaded {
        inputs: Inputs {
            x: args.x.clone(),
            y: args.y.clone(),
            v: args.v.clone(),
            mask: args.mask.clone(),
            n: data.n(),
            p: data.p(),
            q: data.q(),
            k: v.as_ref().map(|t| t.names.len()),
            missing_entries,
        },
        names: Names {
            predictors: x.names,
            responses: y.names,
            covariates: v.map(|t| t.names),
        },
        data,
    })
}

/// L1 on data with missing responses uses column weights `n / n_k`.
fn resolve_penalty(
    args: &SolverArgs,
    file: &FileConfig,
    data: &RegressionData,
) -> Result<PenaltySpec, CliError> {
    let kind = pick(args.penalty, &file.penalty, PenaltyKind::L1);
    let spec = match kind {
        PenaltyKind::L1 => match data.mask() {
            Some(mask) => PenaltySpec::weighted_from_mask(mask)?,
            None => PenaltySpec::L1,
        },
        PenaltyKind::Group => PenaltySpec::GroupRow,
        PenaltyKind::Nuclear => PenaltySpec::Nuclear,
        PenaltyKind::SparseGroup => PenaltySpec::SparseGroup {
            l1_weight: pick(args.l1_weight, &file.l1_weight, DEFAULT_L1_WEIGHT),
            group_weight: pick(args.group_weight, &file.group_weight, DEFAULT_GROUP_WEIGHT),
        },
    };
    spec.validate(data.q())?;
    Ok(spec)
}

fn resolve_solver(args: &SolverArgs, file: &FileConfig) -> FitConfig {
    let mut config = FitConfig::new(1.0, 0.0);
    config.t0 = args.t0.or(file.t0);
    config.step_growth = pick(args.step_growth, &file.step_growth, FitConfig::DEFAULT_STEP_GROWTH);
    config.max_iter = pick(args.max_iter, &file.max_iter, FitConfig::DEFAULT_MAX_ITER);
    config.tol = pick(args.tol, &file.tol, FitConfig::DEFAULT_TOL);
    config.accelerate = !args.no_accelerate && file.accelerate.unwrap_or(true);
    config
}

fn solver_settings(config: &FitConfig, data: &RegressionData) -> SolverSettings {
    SolverSettings {
        t0: config.t0,
        step_growth: config.step_growth,
        max_iter: config.max_iter,
        tol: config.tol,
        accelerate: config.accelerate,
        loss: match LossKind::for_data(data) {
            LossKind::Observed => "observed".into(),
            _ => "full".into(),
        },
    }
}

struct GridSettings {
    folds: usize,
    num_lambdas: usize,
    delta: f64,
    taus: Vec<f64>,
}

fn resolve_grid(args: &GridArgs, file: &FileConfig) -> GridSettings {
    GridSettings {
        folds: pick(args.folds, &file.folds, tuning::DEFAULT_FOLDS),
        num_lambdas: pick(args.num_lambdas, &file.num_lambdas, tuning::DEFAULT_NUM_LAMBDAS),
        delta: pick(args.delta, &file.delta, tuning::DEFAULT_DELTA),
        taus: pick(args.taus.clone(), &file.taus, tuning::default_taus()),
    }
}

fn run_cv(
    data: &RegressionData,
    penalty: &PenaltySpec,
    grid: &GridSettings,
    refine: bool,
    options: &CvOptions,
) -> Result<(FittedModel, CVResult, TuningGrid), CliError> {
    let coarse = build_grid(data, penalty, grid.num_lambdas, grid.delta, Some(grid.taus.clone()))?;
    let (model, cv) = fit_cv(data, penalty, &coarse, options)?;
    if !refine {
        return Ok((model, cv, coarse));
    }
    let fine = refine_grid(&cv, &coarse);
    let (fine_model, fine_cv) = fit_cv(data, penalty, &fine, options)?;
    if fine_cv.min_error() < cv.min_error() {
        Ok((fine_model, fine_cv, fine))
    } else {
        Ok((model, cv, coarse))
    }
}

fn write_cv(dir: &Path, cv: &CVResult) -> Result<(), CliError> {
    let mut surface = Vec::new();
    for (ti, &tau) in cv.taus.iter().enumerate() {
        for (li, &lambda) in cv.lambdas_per_tau[ti].iter().enumerate() {
            surface.push(vec![
                tau.to_string(),
                lambda.to_string(),
                cv.error_surface[(ti, li)].to_string(),
            ]);
        }
    }
    write_records(&dir.join(SURFACE_FILE), &["tau", "lambda", "cv_error"], surface)?;
    let folds = cv.records().into_iter().map(|r| {
        vec![
            r.fold.to_string(),
            r.tau.to_string(),
            r.lambda.to_string(),
            r.error.to_string(),
        ]
    });
    write_records(&dir.join(FOLDS_FILE), &["fold", "tau", "lambda", "error"], folds)
}

fn cv_summary(cv: &CVResult, grid: &GridSettings, refine: bool) -> CvSummary {
    CvSummary {
        folds: grid.folds,
        num_lambdas: grid.num_lambdas,
        delta: grid.delta,
        taus: grid.taus.clone(),
        refine,
        best_tau: cv.best_tau,
        best_lambda: cv.best_lambda,
        min_error: cv.min_error(),
        surface_file: SURFACE_FILE.into(),
        folds_file: FOLDS_FILE.into(),
    }
}

fn cv_options(common: &Common, grid: &GridSettings, solver: &FitConfig) -> CvOptions {
    CvOptions {
        folds: grid.folds,
        seed: common.seed,
        jobs: common.jobs,
        solver: solver.clone(),
    }
}

fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn run_fit(common: &Common, file: &FileConfig, args: &FitArgs) -> Result<(), CliError> {
    let loaded = load_data(&args.data)?;
    let data = &loaded.data;
    let penalty = resolve_penalty(&args.solver, file, data)?;
    let solver = resolve_solver(&args.solver, file);
    prepare_out_dir(&common.out_dir)?;

    let (model, cv) = if args.cv {
        let grid = resolve_grid(&args.grid, file);
        let refine = pick_switch(args.refine, file.refine, false);
        let options = cv_options(common, &grid, &solver);
        let (model, cv, _) = run_cv(data, &penalty, &grid, refine, &options)?;
        write_cv(&common.out_dir, &cv)?;
        let summary = cv_summary(&cv, &grid, refine);
        (model, Some(summary))
    } else {
        let (Some(tau), Some(lambda)) = (args.tau.or(file.tau), args.lambda.or(file.lambda)) else {
            return Err(CliError::Input(
                "give both --tau and --lambda, or --cv to select them".into(),
            ));
        };
        let mut config = solver.clone();
        config.tau = tau;
        config.lambda = lambda;
        let init = DMatrix::zeros(data.p(), data.q());
        let model = solve(data, &penalty, &config, &init, &LossKind::for_data(data))?;
        (model, None)
    };

    let dir = &common.out_dir;
    let names = &loaded.names;
    write_table(&dir.join(BETA_FILE), &names.responses, &model.beta_hat, None)?;
    let mu = DMatrix::from_row_slice(1, model.mu_hat.len(), model.mu_hat.as_slice());
    write_table(&dir.join(MU_FILE), &names.responses, &mu, None)?;
    let eta_file = match (&model.eta_hat, &names.covariates) {
        (Some(eta), Some(_)) => {
            write_table(&dir.join(ETA_FILE), &names.responses, eta, None)?;
            Some(ETA_FILE.to_string())
        }
        _ => None,
    };

    let lmax = lambda_max(data, &penalty)?;
    let manifest = ModelManifest {
        schema_version: SCHEMA_VERSION.into(),
        command: "fit".into(),
        seed: common.seed,
        jobs: common.jobs,
        inputs: loaded.inputs.clone(),
        names: loaded.names.clone(),
        penalty,
        solver: solver_settings(&solver, data),
        cv,
        fit: Some(FitSummary {
            tau: model.tau,
            lambda: model.lambda,
            lambda_max: lmax,
            at_lambda_max_boundary: model.lambda >= lmax,
            iterations: model.iterations,
            final_objective: model.final_objective(),
            converged: model.converged,
            nonzero_coefficients: model.beta_hat.iter().filter(|v| **v != 0.0).count(),
        }),
        files: Some(Files {
            beta: BETA_FILE.into(),
            mu: MU_FILE.into(),
            eta: eta_file,
        }),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    if !model.converged {
        eprintln!(
            "warning: solver stopped after {} iterations without meeting the tolerance",
            model.iterations
        );
    }
    Ok(())
}

pub fn run_cv_command(common: &Common, file: &FileConfig, args: &CvArgs) -> Result<(), CliError> {
    let loaded = load_data(&args.data)?;
    let data = &loaded.data;
    let penalty = resolve_penalty(&args.solver, file, data)?;
    let solver = resolve_solver(&args.solver, file);
    let grid = resolve_grid(&args.grid, file);
    let refine = pick_switch(args.refine, file.refine, false);
    prepare_out_dir(&common.out_dir)?;
    let options = cv_options(common, &grid, &solver);
    let coarse = build_grid(data, &penalty, grid.num_lambdas, grid.delta, Some(grid.taus.clone()))?;
    let mut cv = mvlink::cross_validate(data, &penalty, &coarse, &options)?;
    if refine {
        let fine = refine_grid(&cv, &coarse);
        let fine_cv = mvlink::cross_validate(data, &penalty, &fine, &options)?;
        if fine_cv.min_error() < cv.min_error() {
            cv = fine_cv;
        }
    }
    write_cv(&common.out_dir, &cv)?;
    let manifest = ModelManifest {
        schema_version: SCHEMA_VERSION.into(),
        command: "cv".into(),
        seed: common.seed,
        jobs: common.jobs,
        inputs: loaded.inputs.clone(),
        names: loaded.names.clone(),
        penalty,
        solver: solver_settings(&solver, data),
        cv: Some(cv_summary(&cv, &grid, refine)),
        fit: None,
        files: None,
    };
    write_json(&common.out_dir.join(MANIFEST_FILE), &manifest)?;
    println!("tau = {}\nlambda = {}", cv.best_tau, cv.best_lambda);
    Ok(())
}

/// Rebuilds a fitted model from a `fit` manifest and its coefficient files.
pub fn load_model(manifest_path: &Path) -> Result<(ModelManifest, FittedModel), CliError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| CliError::io(manifest_path, e))?;
    let manifest: ModelManifest =
        serde_json::from_str(&text).map_err(|e| CliError::io(manifest_path, e))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(CliError::Input(format!(
            "{}: unsupported schema version {}",
            manifest_path.display(),
            manifest.schema_version
        )));
    }
    let (Some(files), Some(fit)) = (&manifest.files, &manifest.fit) else {
        return Err(CliError::Input(format!(
            "{}: manifest has no fitted coefficients",
            manifest_path.display()
        )));
    };
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let (p, q) = (manifest.inputs.p, manifest.inputs.q);
    let read = |name: &str, rows: usize| -> Result<DMatrix<f64>, CliError> {
        let path = dir.join(name);
        let table = read_table(&path, false)?;
        if table.values.shape() != (rows, q) {
            return Err(CliError::Input(format!("{}: expected {rows}x{q}", path.display())));
        }
        Ok(table.values)
    };
    let beta = read(&files.beta, p)?;
    let mu = read(&files.mu, 1)?;
    let eta = match (&files.eta, manifest.inputs.k) {
        (Some(name), Some(k)) => Some(read(name, k)?),
        _ => None,
    };
    let model = FittedModel {
        beta_hat: beta,
        eta_hat: eta,
        mu_hat: DVector::from_iterator(q, mu.iter().cloned()),
        tau: fit.tau,
        lambda: fit.lambda,
        objective_trace: Vec::new(),
        converged: fit.converged,
        iterations: fit.iterations,
    };
    Ok((manifest, model))
}

pub fn run_predict(common: &Common, args: &PredictArgs) -> Result<(), CliError> {
    let (manifest, model) = load_model(&args.manifest)?;
    let x = read_table(&args.x, false)?;
    let v = args.v.as_deref().map(|p| read_table(p, false)).transpose()?;
    let predictions = predict(&model, &x.values, v.as_ref().map(|t| &t.values))?;
    prepare_out_dir(&common.out_dir)?;
    write_table(
        &common.out_dir.join(PREDICTIONS_FILE),
        &manifest.names.responses,
        &predictions,
        None,
    )
}
