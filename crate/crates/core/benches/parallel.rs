use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use shrinkdl::linalg::{matmul_seq, Matrix};
use shrinkdl::model::{evaluate, init_params, Activation, Loss, OutputUnit};
use shrinkdl::shrinkage::{ShrinkConfig, ShrinkMode};
use shrinkdl::{synth_blobs, train, TrainConfig};

fn ramp(rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|i| ((i % 97) as f64 - 48.0) / 97.0).collect()).unwrap()
}

/// Forward-pass shaped product: (hidden x input) * (input x batch).
fn bench_matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for &(out, inp, batch) in &[(100, 784, 100), (1000, 784, 100), (10, 1000, 100)] {
        let a = ramp(out, inp);
        let b = ramp(inp, batch);
        let id = format!("{out}x{inp}x{batch}");
        group.bench_with_input(BenchmarkId::new("sequential", &id), &(), |bch, _| {
            bch.iter(|| matmul_seq(black_box(&a), black_box(&b)).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", &id), &(), |bch, _| {
            bch.iter(|| shrinkdl::linalg::matmul_par(black_box(&a), black_box(&b)).unwrap())
        });
    }
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let ds = synth_blobs(5000, 784, 10, 0.3, 1).unwrap();
    let params = init_params(&[784, 100, 10], Activation::Tanh, OutputUnit::Sigmoid, Loss::SumSquared, 1).unwrap();
    c.bench_function("evaluate/5000x784-100-10", |b| {
        b.iter(|| evaluate(black_box(&params), black_box(&ds)).unwrap())
    });
}

/// Full training against shrinking with recall at the default rates.
fn bench_schedules(c: &mut Criterion) {
    let ds = synth_blobs(4000, 64, 10, 0.5, 3).unwrap();
    let base = TrainConfig {
        batch_size: 100,
        epochs: 10,
        ..TrainConfig::new(vec![64, 64, 10])
    };
    let mut group = c.benchmark_group("train_10_epochs");
    group.sample_size(10);
    for (name, mode) in [("full", ShrinkMode::Full), ("shrink_recall", ShrinkMode::ShrinkRecall)] {
        let cfg = TrainConfig {
            shrink: ShrinkConfig {
                mode,
                ..ShrinkConfig::default()
            },
            ..base.clone()
        };
        group.bench_function(name, |b| b.iter(|| train(&ds, &ds, &cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_matmul, bench_evaluate, bench_schedules);
criterion_main!(benches);
