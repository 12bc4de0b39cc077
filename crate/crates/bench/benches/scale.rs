use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use levy_scale::estimators::estimate;
use levy_scale::oracle::{laplace_invert_scale, ladder_grid, GridOptions};
use levy_scale::scale_series::coeffs_true;
use levy_scale::simulate::{make_scheme, simulate};
use levy_scale::ScaleApprox;
use levy_scale_bench::{exp_model, gamma_model, observations, options, params, x_grid};

fn coefficients(c: &mut Criterion) {
    let mut g = c.benchmark_group("coeffs_true");
    for k in [10, 20, 40] {
        g.bench_with_input(BenchmarkId::new("exponential", k), &k, |b, &k| {
            b.iter(|| coeffs_true(black_box(&exp_model(0.1)), &params(k)).unwrap())
        });
    }
    g.sample_size(10);
    g.bench_function("gamma/20", |b| b.iter(|| coeffs_true(black_box(&gamma_model(0.1)), &params(20)).unwrap()));
    g.finish();
}

fn curves(c: &mut Criterion) {
    let approx = ScaleApprox::for_model(&exp_model(0.1), &params(40)).unwrap();
    let xs = x_grid(101, 10.0);
    c.bench_function("curve/K40/101pts", |b| b.iter(|| approx.curve(black_box(&xs)).unwrap()));
    c.bench_function("gradients/K40", |b| b.iter(|| approx.gradients(black_box(3.0)).unwrap()));
}

fn oracles(c: &mut Criterion) {
    let m = exp_model(0.1);
    c.bench_function("talbot/x=5", |b| b.iter(|| laplace_invert_scale(&m, 0.1, black_box(5.0)).unwrap()));
    let mut g = c.benchmark_group("ladder_grid");
    g.sample_size(10);
    let cl = levy_scale::LevyModel::exponential(1.5, 0.0, 1.0, 1.0, 0.0).unwrap();
    g.bench_function("cramer-lundberg", |b| b.iter(|| ladder_grid(black_box(&cl), GridOptions::default()).unwrap()));
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    let scheme = make_scheme(400.0, 1.0, 0.49, 1.0).unwrap();
    g.bench_function("simulate/T400", |b| b.iter(|| simulate(&exp_model(0.1), &scheme, black_box(1)).unwrap()));
    let obs = observations(400.0, 1);
    let xs = [1.0, 3.0];
    g.bench_function("estimate/T400/K20", |b| {
        b.iter(|| estimate(black_box(&obs), 1.5, 0.1, &params(20), &xs, &options()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, coefficients, curves, oracles, pipeline);
criterion_main!(benches);
