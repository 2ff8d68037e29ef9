//! Compares the data-parallel kernels on a single-thread pool against the
//! default rayon pool. Built without the `parallel` feature, both series
//! run the sequential fallback and should match.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hyfe_core::classify::{rf_predict, rf_train, ForestParams};
use hyfe_core::graph::heat_kernel_affinity;
use hyfe_core::pipeline::stratified_sample;
use hyfe_core::synth::{gen_synthetic, SyntheticSpec};
use hyfe_core::ufe::{otvca, SolverConfig};
use nalgebra::DMatrix;
use rayon::{ThreadPool, ThreadPoolBuilder};

fn pools() -> Vec<(String, ThreadPool)> {
    let default_threads = rayon::current_num_threads();
    let mut out = vec![(
        "1-thread".to_string(),
        ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
    )];
    if default_threads > 1 {
        out.push((
            format!("{default_threads}-threads"),
            ThreadPoolBuilder::new()
                .num_threads(default_threads)
                .build()
                .unwrap(),
        ));
    }
    out
}

fn scene_spec() -> SyntheticSpec {
    SyntheticSpec {
        rows: 64,
        cols: 64,
        bands: 32,
        ..SyntheticSpec::default()
    }
}

fn forest(c: &mut Criterion) {
    let scene = gen_synthetic(&scene_spec(), 1).unwrap();
    let idx = stratified_sample(&scene.labels, 50, 2).unwrap();
    let x = scene.cube.matrix();
    let train = DMatrix::from_fn(x.nrows(), idx.len(), |r, c| x[(r, idx[c])]);
    let labels: Vec<usize> = idx
        .iter()
        .map(|&i| scene.labels.labels()[i] as usize)
        .collect();
    let params = ForestParams {
        n_trees: 100,
        mtry: None,
        seed: 3,
    };
    let model = rf_train(&train, &labels, &params).unwrap();

    let mut group = c.benchmark_group("random_forest");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("train", &name), |b| {
            b.iter(|| pool.install(|| rf_train(&train, &labels, &params).unwrap()))
        });
        group.bench_function(BenchmarkId::new("predict_scene", &name), |b| {
            b.iter(|| pool.install(|| rf_predict(&model, &x).unwrap()))
        });
    }
    group.finish();
}

fn extraction(c: &mut Criterion) {
    let scene = gen_synthetic(&scene_spec(), 4).unwrap();
    let cfg = SolverConfig {
        outer_iters: 5,
        ..SolverConfig::with_lambda(0.05)
    };
    let x = scene.cube.matrix();
    let sample = DMatrix::from_fn(x.nrows(), 800, |r, c| x[(r, c * 5)]);

    let mut group = c.benchmark_group("extraction");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("otvca", &name), |b| {
            b.iter(|| pool.install(|| otvca(&scene.cube, 8, &cfg).unwrap()))
        });
        group.bench_function(BenchmarkId::new("knn_heat_graph", &name), |b| {
            b.iter(|| pool.install(|| heat_kernel_affinity(&sample, 10, 1.0).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, forest, extraction);
criterion_main!(benches);
