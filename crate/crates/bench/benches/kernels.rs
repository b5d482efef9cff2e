use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use segforge_bench::random;
use segforge_core::metrics::{logits_to_mask, Confusion, DICE_EPS};
use segforge_core::Tape;

fn conv(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv2d");
    for &(cin, cout, k, size) in &[(64, 64, 3, 32), (256, 64, 1, 32), (3, 64, 7, 128)] {
        let x = random(&[2, cin, size, size], 1).with_requires_grad(true);
        let w = random(&[cout, cin, k, k], 2).with_requires_grad(true);
        let id = format!("{cin}->{cout} k{k} {size}px");
        g.bench_function(BenchmarkId::new("forward", &id), |b| {
            b.iter(|| {
                let mut t = Tape::no_grad();
                let (xv, wv) = (t.leaf(&x), t.leaf(&w));
                t.conv2d(&xv, &wv, None, 1, k / 2).unwrap()
            })
        });
        g.bench_function(BenchmarkId::new("forward_backward", &id), |b| {
            b.iter(|| {
                let mut t = Tape::new();
                let (xv, wv) = (t.leaf(&x), t.leaf(&w));
                let y = t.conv2d(&xv, &wv, None, 1, k / 2).unwrap();
                let l = t.sum(&y);
                t.backward(&l).unwrap()
            })
        });
    }
    g.finish();
}

fn loss_and_metrics(c: &mut Criterion) {
    let logits = random(&[8, 4, 128, 128], 3).with_requires_grad(true);
    let target = random(&[8, 4, 128, 128], 4);
    c.bench_function("soft_dice_loss fwd+bwd 8x4x128x128", |b| {
        b.iter(|| {
            let mut t = Tape::new();
            let (z, y) = (t.leaf(&logits), t.constant(&target));
            let l = t.soft_dice_loss(&z, &y, DICE_EPS).unwrap();
            t.backward(&l).unwrap()
        })
    });
    let pred = logits_to_mask(&logits).unwrap();
    let truth = logits_to_mask(&target).unwrap();
    c.bench_function("argmax 8x4x128x128", |b| b.iter(|| logits_to_mask(&logits).unwrap()));
    c.bench_function("confusion 8x128x128", |b| {
        b.iter(|| Confusion::from_masks(&pred, &truth, 4).unwrap())
    });
}

criterion_group!(benches, conv, loss_and_metrics);
criterion_main!(benches);
