mod common;

use common::{cd_lasso, gaussian, instance, max_abs, ols, rng};
use mvlink::loss::WeightedResidualLoss;
use mvlink::solver::{backtrack, penalized_objective, solve_traced, sufficient_decrease};
use mvlink::{lambda_max, solve, DMatrix, FitConfig, LossKind, PenaltySpec, SmoothLoss};

fn penalties(q: usize) -> Vec<PenaltySpec> {
    vec![
        PenaltySpec::L1,
        PenaltySpec::GroupRow,
        PenaltySpec::SparseGroup {
            l1_weight: 0.5,
            group_weight: 0.5,
        },
        PenaltySpec::Nuclear,
        PenaltySpec::WeightedL1 {
            column_weights: (0..q).map(|k| 1.0 + 0.25 * k as f64).collect(),
        },
    ]
}

fn tight(tau: f64, lambda: f64) -> FitConfig {
    FitConfig {
        tol: 1e-13,
        max_iter: 20_000,
        ..FitConfig::new(tau, lambda)
    }
}

#[test]
fn objective_trace_never_increases() {
    for penalty in penalties(3) {
        for seed in 0..10 {
            let data = instance(seed, 30, 6, 3);
            let lmax = lambda_max(&data, &penalty).unwrap();
            let tau = [1e-2, 1.0, 1e2][seed as usize % 3];
            let cfg = FitConfig::new(tau, 0.2 * lmax);
            let model = solve(&data, &penalty, &cfg, &DMatrix::zeros(6, 3), &LossKind::Full).unwrap();
            let trace = &model.objective_trace;
            assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{penalty:?} seed {seed}");
            assert!(model.converged);
        }
    }
}

#[test]
fn lambda_above_boundary_returns_zero() {
    for seed in 0..5 {
        let data = instance(seed, 25, 7, 3);
        let lmax = lambda_max(&data, &PenaltySpec::L1).unwrap();
        let expected = 2.0 * max_abs(&data.x().tr_mul(data.y())) / 25.0;
        assert!((lmax - expected).abs() < 1e-12 * expected);
        for tau in [1e-3, 1.0, 1e4] {
            for factor in [1.0, 1.5] {
                let cfg = FitConfig::new(tau, factor * lmax);
                let m = solve(&data, &PenaltySpec::L1, &cfg, &DMatrix::zeros(7, 3), &LossKind::Full).unwrap();
                assert!(m.beta_hat.iter().all(|v| *v == 0.0));
            }
        }
    }
}

#[test]
fn unpenalized_fixed_weight_is_least_squares() {
    let data = instance(5, 40, 5, 3);
    let cfg = tight(1.0, 0.0);
    let kind = LossKind::FixedWeight(DMatrix::identity(3, 3));
    let m = solve(&data, &PenaltySpec::L1, &cfg, &DMatrix::zeros(5, 3), &kind).unwrap();
    let expected = ols(data.x(), data.y());
    assert!(max_abs(&(&m.beta_hat - expected)) < 1e-6);
    // first-order condition
    let foc = data.x().tr_mul(&(data.x() * &m.beta_hat - data.y()));
    assert!(max_abs(&foc) < 1e-5 * max_abs(&data.x().tr_mul(data.y())));
}

#[test]
fn large_tau_matches_coordinate_descent_lasso() {
    for seed in 0..3 {
        let data = instance(seed, 50, 20, 5);
        let lmax = lambda_max(&data, &PenaltySpec::L1).unwrap();
        for frac in [0.5, 0.2, 0.05] {
            let lambda = frac * lmax;
            let m = solve(&data, &PenaltySpec::L1, &tight(1e8, lambda), &DMatrix::zeros(20, 5), &LossKind::Full)
                .unwrap();
            let oracle = cd_lasso(data.x(), data.y(), lambda);
            let gap = max_abs(&(&m.beta_hat - &oracle));
            assert!(gap < 1e-4, "seed {seed} frac {frac}: {gap}");
        }
    }
}

#[test]
fn acceleration_does_not_hurt() {
    for seed in 0..5 {
        let data = instance(seed, 40, 10, 4);
        let lmax = lambda_max(&data, &PenaltySpec::L1).unwrap();
        let cfg = FitConfig::new(1.0, 0.1 * lmax);
        let plain_cfg = FitConfig {
            accelerate: false,
            ..cfg.clone()
        };
        let init = DMatrix::zeros(10, 4);
        let fast = solve(&data, &PenaltySpec::L1, &cfg, &init, &LossKind::Full).unwrap();
        let slow = solve(&data, &PenaltySpec::L1, &plain_cfg, &init, &LossKind::Full).unwrap();
        let (a, b) = (fast.final_objective().unwrap(), slow.final_objective().unwrap());
        assert!(a <= b + 1e-7 * b.abs(), "seed {seed}: {a} vs {b}");
        assert!(fast.iterations <= slow.iterations);
    }
}

#[test]
fn converged_solution_is_a_fixed_point() {
    let data = instance(8, 30, 6, 3);
    let lmax = lambda_max(&data, &PenaltySpec::L1).unwrap();
    let cfg = FitConfig::new(0.5, 0.3 * lmax);
    let first = solve(&data, &PenaltySpec::L1, &cfg, &DMatrix::zeros(6, 3), &LossKind::Full).unwrap();
    let again = solve(&data, &PenaltySpec::L1, &cfg, &first.beta_hat, &LossKind::Full).unwrap();
    let (a, b) = (first.final_objective().unwrap(), again.final_objective().unwrap());
    assert!((a - b).abs() <= cfg.tol * a.abs());
}

#[test]
fn objective_at_solution_not_above_initial() {
    let data = instance(9, 30, 6, 3);
    let init = gaussian(&mut rng(3), 6, 3);
    for penalty in penalties(3) {
        let cfg = FitConfig::new(2.0, 0.1);
        let m = solve(&data, &penalty, &cfg, &init, &LossKind::Full).unwrap();
        let start = penalized_objective(&data, &penalty, &cfg, &init, &LossKind::Full).unwrap();
        let end = penalized_objective(&data, &penalty, &cfg, &m.beta_hat, &LossKind::Full).unwrap();
        assert!(end <= start);
    }
}

#[test]
fn accepted_backtracking_candidate_satisfies_decrease_test() {
    for seed in 0..10 {
        let data = instance(seed, 20, 5, 3);
        let loss = WeightedResidualLoss::full(&data, 0.3).unwrap();
        let base = gaussian(&mut rng(seed + 50), 5, 3);
        let step = backtrack(&loss, &PenaltySpec::L1, 0.05, &base, 1e-3, 2.0).unwrap();
        let f_base = loss.value(&base);
        let g = loss.gradient(&base);
        let f_cand = loss.value(&step.candidate);
        assert!(sufficient_decrease(f_base, &g, &base, &step.candidate, f_cand, step.step));
        assert!(step.step >= 1e-3 * 2f64.powi(step.increases as i32) * (1.0 - 1e-12));
    }
}

#[test]
fn trace_records_each_iteration() {
    let data = instance(2, 20, 4, 2);
    let mut seen = Vec::new();
    let mut sink = |r: &mvlink::solver::IterationRecord| seen.push((r.iteration, r.objective, r.accepted));
    let m = solve_traced(
        &data,
        &PenaltySpec::L1,
        &FitConfig::new(1.0, 0.05),
        &DMatrix::zeros(4, 2),
        &LossKind::Full,
        Some(&mut sink),
    )
    .unwrap();
    assert_eq!(seen.len(), m.iterations);
    assert_eq!(seen.last().unwrap().1, *m.objective_trace.last().unwrap());
}

#[test]
fn invalid_inputs_are_rejected() {
    let data = instance(1, 10, 3, 2);
    let init = DMatrix::zeros(3, 2);
    assert!(solve(&data, &PenaltySpec::L1, &FitConfig::new(0.0, 0.1), &init, &LossKind::Full).is_err());
    assert!(solve(&data, &PenaltySpec::L1, &FitConfig::new(1.0, -0.1), &init, &LossKind::Full).is_err());
    assert!(solve(&data, &PenaltySpec::L1, &FitConfig::new(1.0, 0.1), &DMatrix::zeros(2, 2), &LossKind::Full).is_err());
    let mut bad = init.clone();
    bad[(0, 0)] = f64::NAN;
    assert!(solve(&data, &PenaltySpec::L1, &FitConfig::new(1.0, 0.1), &bad, &LossKind::Full).is_err());
    assert!(solve(&data, &PenaltySpec::L1, &FitConfig::new(1.0, 0.1), &init, &LossKind::Observed).is_err());
}
