use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mvlink::prox::prox;
use mvlink::{grad_full, grad_observed, lambda_max, loss_full, solve, DMatrix, FitConfig, LossKind, PenaltySpec};
use mvlink_bench::{dense, masked_problem, problem};
use std::hint::black_box;

fn loss_and_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("loss");
    for &(p, q) in &[(50, 10), (200, 50)] {
        let data = problem(100, p, q, 1);
        let masked = masked_problem(100, p, q, 1, 7);
        let beta = dense(p, q, 2) * 0.1;
        let id = format!("{p}x{q}");
        group.bench_with_input(BenchmarkId::new("value", &id), &beta, |b, beta| {
            b.iter(|| loss_full(black_box(beta), 0.5, &data).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("gradient", &id), &beta, |b, beta| {
            b.iter(|| grad_full(black_box(beta), 0.5, &data).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("gradient_observed", &id), &beta, |b, beta| {
            b.iter(|| grad_observed(black_box(beta), 0.5, &masked).unwrap())
        });
    }
    group.finish();
}

fn prox_operators(c: &mut Criterion) {
    let mut group = c.benchmark_group("prox");
    let m = dense(200, 50, 3);
    let penalties = [
        ("l1", PenaltySpec::L1),
        ("group", PenaltySpec::GroupRow),
        ("sparse_group", PenaltySpec::SparseGroup { l1_weight: 1.0, group_weight: 1.0 }),
        ("nuclear", PenaltySpec::Nuclear),
    ];
    for (name, penalty) in &penalties {
        group.bench_function(*name, |b| b.iter(|| prox(penalty, black_box(&m), 0.3).unwrap()));
    }
    group.finish();
}

fn full_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    let data = problem(100, 50, 10, 4);
    let lmax = lambda_max(&data, &PenaltySpec::L1).unwrap();
    for tau in [1e2, 1.0, 1e-2] {
        let config = FitConfig::new(tau, 0.2 * lmax);
        group.bench_with_input(BenchmarkId::new("l1", tau), &config, |b, config| {
            b.iter(|| {
                solve(&data, &PenaltySpec::L1, config, &DMatrix::zeros(50, 10), &LossKind::Full).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, loss_and_gradient, prox_operators, full_solve);
criterion_main!(benches);
