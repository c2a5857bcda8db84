//! Rayon vs in-order execution of the data-parallel kernels.
//!
//! Run with `cargo bench -p ect-core`. Each group times the same kernel under
//! both `Execution` policies; building with `--no-default-features` makes the
//! parallel arm fall back to the sequential path.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ect_core::config::ExperimentConfig;
use ect_core::forward::{noisy_frames, ForwardConfig, ForwardModel};
use ect_core::geometry::{PixelGrid, SensorGeometry};
use ect_core::par::Execution;
use ect_core::phantom::PhantomKind;
use ect_core::pipeline::run_experiment;

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn model(exec: Execution) -> ForwardModel {
    let geo = SensorGeometry::standard();
    let grid = PixelGrid::new(48, &geo).unwrap();
    ForwardModel::new(geo, grid, ForwardConfig::default(), exec).unwrap()
}

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        let fm = model(exec);
        group.bench_function(BenchmarkId::new("calibrate", name), |b| b.iter(|| fm.calibrate().unwrap()));
        let cal = fm.calibrate().unwrap();
        group.bench_function(BenchmarkId::new("sensitivity", name), |b| {
            b.iter(|| fm.sensitivity(black_box(&cal)).unwrap())
        });
        let perm = fm.shapes_perm(&PhantomKind::Cross.shapes()).unwrap();
        group.bench_function(BenchmarkId::new("measure", name), |b| b.iter(|| fm.frame(black_box(&perm)).unwrap()));
    }
    group.finish();
}

fn kernels(c: &mut Criterion) {
    let fm = model(Execution::Parallel);
    let cal = fm.calibrate().unwrap();
    let s = fm.sensitivity(&cal).unwrap();
    let lambda: Vec<f64> = (0..s.rows()).map(|m| (m as f64 * 0.37).sin()).collect();
    let mut out = vec![0.0; s.cols()];

    let mut group = c.benchmark_group("kernels");
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::new("apply_t", name), |b| {
            b.iter(|| s.apply_t_into(black_box(&lambda), &mut out, exec).unwrap())
        });
        group.bench_function(BenchmarkId::new("noisy_frames_1000", name), |b| {
            b.iter(|| noisy_frames(black_box(&cal.pair.low), 35.0, 1000, 7, exec))
        });
    }
    group.finish();
}

fn experiment(c: &mut Criterion) {
    let mut config = ExperimentConfig::default();
    config.noise.frames = 100;
    config.aadmm.iters = 50;
    let mut group = c.benchmark_group("experiment");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::new("compare", name), |b| {
            b.iter(|| run_experiment(black_box(&config), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward, kernels, experiment);
criterion_main!(benches);
