//! Settings file. Keys mirror the long flag names with `_` for `-`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::args::PenaltyKind;
use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,

    pub penalty: Option<PenaltyKind>,
    pub l1_weight: Option<f64>,
    pub group_weight: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub t0: Option<f64>,
    pub step_growth: Option<f64>,
    pub accelerate: Option<bool>,

    pub folds: Option<usize>,
    pub num_lambdas: Option<usize>,
    pub delta: Option<f64>,
    pub taus: Option<Vec<f64>>,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub refine: Option<bool>,

    pub model: Option<u8>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub q: Option<usize>,
    pub gamma_sq: Option<f64>,
    pub sigma_u_sq: Option<f64>,
    pub rho: Option<f64>,
    pub replications: Option<usize>,
    pub sigma_u: Option<Vec<f64>>,
    pub methods: Option<Vec<String>>,
    pub n_test: Option<usize>,
    pub plots: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::io(path, e))
    }
}

/// Flag, else file, else default.
pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>, default: T) -> T {
    flag.or_else(|| file.clone()).unwrap_or(default)
}

/// A `bool` switch that can only be turned on by its flag.
pub fn pick_switch(flag: bool, file: Option<bool>, default: bool) -> bool {
    flag || file.unwrap_or(default)
}
