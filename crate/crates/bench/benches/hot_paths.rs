//! Benchmarks of the per-batch hot paths: LOF scoring, hard pair mining,
//! and the forward/backward pass.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use openloop_core::detection::{lof_scores, DetectionState, Status};
use openloop_core::losses::reweighted_softmax;
use openloop_core::model::NetworkParams;
use openloop_core::pairing::hard_mine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect()
}

fn bench_lof(c: &mut Criterion) {
    // one class of 500 at the default k = class_size / 2
    let points = random_points(500, 16, 1);
    c.bench_function("lof_scores_n500_k250", |b| {
        b.iter(|| lof_scores(black_box(&points), 250).unwrap())
    });
}

fn bench_pclof(c: &mut Criterion) {
    let points = random_points(500, 16, 2);
    c.bench_function("detect_accumulate_n500", |b| {
        b.iter_batched(
            || DetectionState::new((0..points.len()).map(|i| (i, 0))),
            |mut state| {
                state.detect(black_box(&points), 0.5).unwrap();
                state
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_mining(c: &mut Criterion) {
    let features = random_points(512, 16, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let statuses: Vec<Status> = (0..512)
        .map(|_| {
            if rng.gen_bool(0.3) {
                Status::Noisy
            } else {
                Status::Clean
            }
        })
        .collect();
    let labels: Vec<usize> = (0..512).map(|_| rng.gen_range(0..2)).collect();
    c.bench_function("hard_mine_pool256_budget32", |b| {
        b.iter(|| {
            hard_mine(
                black_box(&features),
                &statuses,
                &labels,
                32,
                256,
                7,
            )
            .unwrap()
        })
    });
}

fn bench_forward_backward(c: &mut Criterion) {
    let params = NetworkParams::init(&[16, 32, 16, 2], 5).unwrap();
    let batch = random_points(128, 16, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let labels: Vec<usize> = (0..128).map(|_| rng.gen_range(0..2)).collect();
    let gammas = vec![1.0; 128];

    c.bench_function("forward_batch128", |b| {
        b.iter(|| params.forward(black_box(&batch)).unwrap())
    });
    c.bench_function("forward_backward_batch128", |b| {
        b.iter(|| {
            let trace = params.forward(black_box(&batch)).unwrap();
            let (_, d_logits) = reweighted_softmax(trace.logits(), &labels, &gammas).unwrap();
            trace.backward(&params, &d_logits, None).unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_lof,
    bench_pclof,
    bench_mining,
    bench_forward_backward
);
criterion_main!(benches);
