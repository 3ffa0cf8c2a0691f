use criterion::{criterion_group, criterion_main, Criterion};
use rasg_bench::desk_fixture;
use rasg_core::evaluation::RougeScores;
use rasg_core::graph::Graph;
use rasg_core::model::Pass;
use rasg_core::training::{Trainer, TrainingConfig};
use rasg_core::Variant;
use std::hint::black_box;

fn forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_backward");
    for variant in [Variant::Rasg, Variant::S2s] {
        let (model, _, encoded) = desk_fixture(variant, 4);
        group.bench_function(variant.label(), |b| {
            b.iter(|| {
                let mut g = Graph::new();
                let trace = model.forward(&mut g, black_box(&encoded[0]), Pass::Full).unwrap();
                let total = g.add(trace.losses.nll, trace.losses.denoise);
                black_box(g.backward(total, &model.store))
            })
        });
    }
    group.finish();
}

fn decoding(c: &mut Criterion) {
    let (model, _, encoded) = desk_fixture(Variant::Rasg, 4);
    let mut group = c.benchmark_group("decode");
    group.sample_size(20);
    for beam in [1, 5] {
        group.bench_function(format!("beam {beam}"), |b| {
            b.iter(|| model.generate(black_box(&encoded[1]), beam, 20).unwrap())
        });
    }
    group.finish();
}

fn training_step(c: &mut Criterion) {
    let (_, corpus, _) = desk_fixture(Variant::Rasg, 32);
    let config = TrainingConfig {
        batch_size: 4,
        ..TrainingConfig::default()
    };
    let mut trainer = Trainer::new(config, &corpus).unwrap();
    let mut group = c.benchmark_group("train_step");
    group.sample_size(10);
    group.bench_function("RASG batch 4", |b| b.iter(|| trainer.train_step().unwrap()));
    group.finish();
}

fn rouge(c: &mut Criterion) {
    let (_, corpus, _) = desk_fixture(Variant::S2s, 64);
    c.bench_function("rouge 64 document pairs", |b| {
        b.iter(|| {
            corpus
                .iter()
                .map(|e| RougeScores::score(black_box(&e.document), &e.summary))
                .collect::<Vec<_>>()
        })
    });
}

criterion_group!(benches, forward_backward, decoding, training_step, rouge);
criterion_main!(benches);
