use criterion::{criterion_group, criterion_main, Criterion};

use segforge_bench::{random, synthetic_batch};
use segforge_core::model::{ModelConfig, SegModel};
use segforge_core::nn::Mode;
use segforge_core::train::{train_step, AdamState, RunConfig};

fn desk(c: &mut Criterion) {
    let cfg = RunConfig::desk();
    let batch = synthetic_batch(cfg.batch_size, 64);
    let mut model = SegModel::<f32>::new(&cfg.model, 1).unwrap();
    let mut opt = AdamState::new(&model.params);
    c.bench_function("desk train step", |b| {
        b.iter(|| train_step(&mut model, &mut opt, &batch, &cfg).unwrap())
    });
    c.bench_function("desk eval forward", |b| {
        b.iter(|| model.infer(&batch.images, Mode::Eval).unwrap())
    });
}

fn full_width(c: &mut Criterion) {
    let mut model = SegModel::<f32>::new(&ModelConfig::seresnet152(), 1).unwrap();
    let x = random(&[1, 3, 128, 128], 9);
    let mut g = c.benchmark_group("full width");
    g.sample_size(10);
    g.bench_function("eval forward 1x3x128x128", |b| {
        b.iter(|| model.infer(&x, Mode::Eval).unwrap())
    });
    g.finish();
}

criterion_group!(benches, desk, full_width);
criterion_main!(benches);
