use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use graphlet_bench::{elec_like, quick_model};
use graphlet_core::baseline::{mhrw_sample, naive_sample};
use graphlet_core::exact::{enumerate_connected, exact_distribution};
use graphlet_core::gnns::{estimate_distribution, gcn_forward, EstimateConfig};

fn exact(c: &mut Criterion) {
    let g = elec_like(1);
    c.bench_function("esu k=4", |b| b.iter(|| enumerate_connected(black_box(&g), 4).unwrap()));
    c.bench_function("exact k=4,5", |b| b.iter(|| exact_distribution(black_box(&g)).unwrap()));
}

fn baselines(c: &mut Criterion) {
    let g = elec_like(2);
    c.bench_function("naive k=5 100k draws", |b| {
        b.iter(|| naive_sample(black_box(&g), 5, 100_000, 3).unwrap())
    });
    c.bench_function("mhrw k=5 1k steps default burn-in", |b| {
        b.iter(|| mhrw_sample(black_box(&g), 5, 1_000, None, 3).unwrap())
    });
}

fn learned(c: &mut Criterion) {
    let g = elec_like(4);
    let model = quick_model(&g, 5);
    c.bench_function("gcn forward", |b| {
        b.iter(|| gcn_forward(black_box(&g), &model.params).unwrap())
    });
    let cfg = EstimateConfig {
        samples: 4096,
        ..EstimateConfig::default()
    };
    c.bench_function("gnns estimate M=4096", |b| {
        b.iter(|| estimate_distribution(&model, black_box(&g), &cfg).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = exact, baselines, learned
}
criterion_main!(benches);
