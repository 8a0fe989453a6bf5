//! Sequential vs rayon paths of the data-parallel loops.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use memnn::harness::config::{ExperimentConfig, Hashing};
use memnn::harness::experiment::{generate, run_eval, run_train};
use memnn::harness::hashbench::{hash_bench, synth_store, synth_train_config, train_synth, SynthConfig};
use memnn::memory::kmeans;
use memnn::parallel::Execution;

const PATHS: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn eval(c: &mut Criterion) {
    let mut cfg = ExperimentConfig::default();
    cfg.train.epochs = 3;
    let (train, test) = generate(&cfg).unwrap();
    let (model, _) = run_train(&cfg, &train).unwrap();
    let mut g = c.benchmark_group("eval_3000_questions");
    g.sample_size(10);
    for (name, exec) in PATHS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(run_eval(&model, &test, Hashing::None, 0, exec).unwrap().accuracy()))
        });
    }
    g.finish();
}

fn kmeans_points(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let points: Vec<Vec<f64>> = (0..4000).map(|_| (0..100).map(|_| normal.sample(&mut rng)).collect()).collect();
    let mut g = c.benchmark_group("kmeans_4000x100_k50");
    g.sample_size(10);
    for (name, exec) in PATHS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(kmeans(&points, 50, 20, 0, exec).unwrap().distortion))
        });
    }
    g.finish();
}

fn hashing(c: &mut Criterion) {
    let sc = SynthConfig {
        subjects: 40,
        train_queries: 2000,
        test_queries: 500,
        ..Default::default()
    };
    let store = synth_store(&sc);
    let model = train_synth(&store, &synth_train_config(2, 0)).unwrap();
    let mut g = c.benchmark_group("hash_bench_2000_slots");
    g.sample_size(10);
    for (name, exec) in PATHS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(hash_bench(&model, &store, &[Hashing::None, Hashing::Cluster(20)], 0, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, eval, kmeans_points, hashing);
criterion_main!(benches);
