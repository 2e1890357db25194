use anticipation::baselines::{fit_baseline_with, BaselineMode, DEFAULT_BINS};
use anticipation::inference::{mc_predict_with, McOptions};
use anticipation::labels::compute_targets_batch;
use anticipation::model::{init_params, NetworkConfig};
use anticipation::par::Exec;
use anticipation::workflow::{generate_dataset_with, SimConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn simulate(c: &mut Criterion) {
    let cfg = SimConfig::cholec_like();
    let mut g = c.benchmark_group("generate_dataset");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| generate_dataset_with(&cfg, 16, 1, exec).unwrap())
        });
    }
    g.finish();
}

fn labels_and_baselines(c: &mut Criterion) {
    let data = generate_dataset_with(&SimConfig::cholec_like(), 16, 2, Exec::Parallel).unwrap();
    let mut g = c.benchmark_group("compute_targets_batch");
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| compute_targets_batch(black_box(&data), 3.0, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("fit_baseline");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| fit_baseline_with(black_box(&data), 3.0, DEFAULT_BINS, BaselineMode::Mean, exec).unwrap())
        });
    }
    g.finish();
}

fn mc_dropout(c: &mut Criterion) {
    let sim = SimConfig::cholec_like();
    let data = generate_dataset_with(&sim, 1, 3, Exec::Parallel).unwrap();
    let features = data[0].features().unwrap();
    let cfg = NetworkConfig::new(features.dim(), sim.instruments.len(), 3.0);
    let params = init_params(&cfg, 0).unwrap();
    let mut g = c.benchmark_group("mc_predict_T16");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        let opts = McOptions {
            exec,
            ..McOptions::new(16, 5)
        };
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| mc_predict_with(&params, black_box(features), opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, simulate, labels_and_baselines, mc_dropout);
criterion_main!(benches);
