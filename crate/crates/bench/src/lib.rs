//! Shared fixtures for the solver benchmarks.

use mvlink::simulation::{generate, make_truth, SimConfig, SimModel};
use mvlink::{center_data, DMatrix, RegressionData};

/// Centered draw from the first simulation model.
pub fn problem(n: usize, p: usize, q: usize, seed: u64) -> RegressionData {
    let config = SimConfig::new(SimModel::One, n, p, q, 0.5, seed);
    let truth = make_truth(&config).expect("valid design");
    let (x, y) = generate(&config, &truth).expect("valid design");
    center_data(&x, &y, None, None).expect("centered data")
}

/// Same data with every `stride`-th response entry unobserved.
pub fn masked_problem(n: usize, p: usize, q: usize, seed: u64, stride: usize) -> RegressionData {
    let config = SimConfig::new(SimModel::One, n, p, q, 0.5, seed);
    let truth = make_truth(&config).expect("valid design");
    let (x, y) = generate(&config, &truth).expect("valid design");
    let mask = DMatrix::from_fn(n, q, |i, j| !(i * q + j).is_multiple_of(stride) || i < 2);
    center_data(&x, &y, None, Some(&mask)).expect("centered data")
}

/// A deterministic dense matrix with entries in `[-1, 1)`.
pub fn dense(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| {
        let h = mvlink::simulation::mix_seed(seed, (i * cols + j) as u64);
        (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    })
}
