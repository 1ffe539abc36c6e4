use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mrme::estimation::{fit, FitOptions, Method};
use mrme::telegraph::tau_matrix;
use mrme::{g_density, marginal_cl, mr_loglik, two_piece_cl, IncrementQuery, StateKind};
use mrme_bench::{irregular_track, params, track};

fn objectives(c: &mut Criterion) {
    let p = params(0.01);
    let regular = track(&p, 500.0, 1.0, 1);
    let irregular = irregular_track(&p, 501, 1.0, 2);
    let noise_free = p.with_sigma_eps(0.0).unwrap();
    let mut g = c.benchmark_group("objective");
    g.bench_function("two_piece/regular_500", |b| b.iter(|| two_piece_cl(black_box(&regular), &p).unwrap()));
    g.bench_function("two_piece/irregular_500", |b| b.iter(|| two_piece_cl(black_box(&irregular), &p).unwrap()));
    g.bench_function("marginal/regular_500", |b| b.iter(|| marginal_cl(black_box(&regular), &p).unwrap()));
    g.bench_function("mr/regular_500", |b| b.iter(|| mr_loglik(black_box(&regular), &noise_free).unwrap()));
    g.finish();
}

fn kernels(c: &mut Criterion) {
    let p = params(0.05);
    let mut g = c.benchmark_group("kernel");
    g.bench_function("tau_matrix/t=1", |b| b.iter(|| tau_matrix(black_box(1.0), p.rates).unwrap()));
    g.bench_function("tau_matrix/t=20", |b| b.iter(|| tau_matrix(black_box(20.0), p.rates).unwrap()));
    let dz = [0.1, -0.2];
    g.bench_function("g_density/cold", |b| {
        b.iter(|| g_density(StateKind::Moving, StateKind::Resting, IncrementQuery::new(black_box(&dz), 1.0).unwrap(), &p).unwrap())
    });
    g.finish();
}

fn fitting(c: &mut Criterion) {
    let p = params(0.01);
    let data = track(&p, 200.0, 1.0, 3);
    let mut g = c.benchmark_group("fit");
    g.sample_size(10);
    g.bench_function("two_piece/regular_200", |b| {
        b.iter(|| fit(black_box(&data), &FitOptions { init: Some(p), ..FitOptions::with_method(Method::TwoPiece) }).unwrap())
    });
    g.finish();
}

criterion_group!(benches, objectives, kernels, fitting);
criterion_main!(benches);
