use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use rovella_core::hyperbolic::{hyperbolic_times, run_ensemble, EnsembleSpec};
use rovella_core::measures::{quenched_correlation, CorrelationParams, Direction, Grid, Method, Observable, ObservableKind, UlamOperator};
use rovella_core::orbit::OrbitEngine;
use rovella_core::tower::build_return_partition;
use rovella_core::{HyperbolicConfig, NoiseStream, PowerFixture, TowerConfig};

fn fixture() -> PowerFixture {
    PowerFixture::new(2.0, 0.1).unwrap()
}

fn orbits(c: &mut Criterion) {
    let f = fixture();
    let engine = OrbitEngine::new(&f, 0.01).unwrap();
    let s = NoiseStream::new(1, 0.01);
    c.bench_function("orbit 10k steps", |b| b.iter(|| engine.iterate(&s, black_box(0.3), 10_000).unwrap()));
    let depths: Vec<u32> = engine.iterate(&s, 0.3, 10_000).unwrap().depths;
    c.bench_function("hyperbolic times 10k", |b| b.iter(|| hyperbolic_times(black_box(&depths), 0.5)));
    let cfg = HyperbolicConfig::default();
    c.bench_function("ensemble 10k x 60", |b| {
        b.iter(|| run_ensemble(&f, &cfg, &EnsembleSpec { samples: 10_000, n_max: 60, seed: 1, eps: 0.01 }).unwrap())
    });
}

fn operators(c: &mut Criterion) {
    let f = fixture();
    c.bench_function("ulam operator 2048", |b| b.iter(|| UlamOperator::new(&f, black_box(0.003), Grid::new(2048))));
    let s = NoiseStream::new(1, 0.01);
    let phi = Observable::new(ObservableKind::parse("x").unwrap());
    let psi = Observable::new(ObservableKind::parse("sign").unwrap());
    let params = CorrelationParams { grid: Grid::new(512), m_past: 60, n_max: 20, ..Default::default() };
    let mut g = c.benchmark_group("correlation");
    g.sample_size(10);
    g.bench_function("ulam 512", |b| {
        b.iter(|| quenched_correlation(&f, &s, &phi, &psi, Direction::Forward, Method::Ulam, &params))
    });
    g.finish();
}

fn partition(c: &mut Criterion) {
    let f = fixture();
    let cfg = TowerConfig { n_max: 16, seed_grid: 1024, ..TowerConfig::default() };
    let mut g = c.benchmark_group("tower");
    g.sample_size(10);
    g.bench_function("partition n_max 16", |b| {
        b.iter_batched(|| NoiseStream::new(1, 0.01), |s| build_return_partition(&f, &s, &cfg).unwrap(), BatchSize::SmallInput)
    });
    g.finish();
}

criterion_group!(benches, orbits, operators, partition);
criterion_main!(benches);
