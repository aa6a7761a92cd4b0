//! Sequential vs rayon execution of the data-parallel hot paths.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use taskweight::controller::{StrategyKind, WeightConfig, WeightVector};
use taskweight::data::{self, TaskProfile};
use taskweight::matrix::Matrix;
use taskweight::simdyn::{self, SimTask};
use taskweight::trainer::{self, Hyperparams};
use taskweight::{model, Exec};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn profiles(t: usize) -> Vec<TaskProfile> {
    (0..t)
        .map(|i| TaskProfile {
            margin: 2.0 / (1.0 + i as f64),
            positive_rate: 0.3,
            label_noise: 0.0,
        })
        .collect()
}

fn numeric_gradient(c: &mut Criterion) {
    let params = model::init_params(8, &[16], 4, 1).unwrap();
    let ds = data::generate_synthetic(32, 8, &profiles(4), 1).unwrap();
    let w = WeightVector::ones(4);
    let mut g = c.benchmark_group("numeric_gradient");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| model::numeric_gradient(&params, &ds.features, &ds.labels, &w, 1e-5, exec).unwrap())
        });
    }
    g.finish();
}

fn predict_logits(c: &mut Criterion) {
    let params = model::init_params(32, &[64, 32], 8, 1).unwrap();
    let x = Matrix::from_vec(4096, 32, (0..4096 * 32).map(|i| ((i % 97) as f64 - 48.0) / 48.0).collect()).unwrap();
    let mut g = c.benchmark_group("predict_logits");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| model::predict_logits(&params, black_box(&x), exec).unwrap()));
    }
    g.finish();
}

fn sim_seeds(c: &mut Criterion) {
    let tasks = simdyn::lagging_scenario(
        8,
        SimTask {
            ceiling: 1.0,
            rate: 0.1,
            noise_sd: 0.01,
        },
        0.5,
    );
    let seeds: Vec<u64> = (0..20).collect();
    let cfg = WeightConfig::default();
    let mut g = c.benchmark_group("run_sim_seeds");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| simdyn::run_sim_seeds(&tasks, StrategyKind::Deepchest, &cfg, 200, &seeds, exec).unwrap())
        });
    }
    g.finish();
}

fn comparison(c: &mut Criterion) {
    let ds = data::generate_synthetic(500, 8, &profiles(4), 2).unwrap();
    let hp = Hyperparams {
        epochs: 3,
        hidden_dims: vec![16],
        ..Hyperparams::default()
    };
    let mut g = c.benchmark_group("run_comparison");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| trainer::run_comparison_with(&ds, &hp, &StrategyKind::ALL, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, numeric_gradient, predict_logits, sim_seeds, comparison);
criterion_main!(benches);
