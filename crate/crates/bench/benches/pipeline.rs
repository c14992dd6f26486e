//! Throughput of the hot paths: windowing, degradation, forest
//! training and scoring, gradient steps, and ranking metrics.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::Rng;

use drivescope_bench::{bench_scenes, bench_windows};
use drivescope_core::eval::roc_auc;
use drivescope_core::learners::forest::{MaxFeatures, SplitCriterion};
use drivescope_core::learners::{fit_forest, MlpRegressor, RfHyperParams, SeqClassifier, SeqHyperParams};
use drivescope_core::rng::rng_from;
use drivescope_core::window::{degrade, impute_last_known, slide_all};
use drivescope_core::{Label, Mat, VariantKind};

fn metrics(c: &mut Criterion) {
    let mut rng = rng_from(1, &[]);
    let scores: Vec<f64> = (0..4096).map(|_| rng.gen_range(0.0..1.0)).collect();
    let labels: Vec<Label> = (0..4096)
        .map(|i| if i % 2 == 0 { Label::Human } else { Label::Autonomous })
        .collect();
    c.bench_function("roc_auc/4096", |b| {
        b.iter(|| roc_auc(black_box(&scores), black_box(&labels)).unwrap())
    });
}

fn windowing(c: &mut Criterion) {
    let scenes = bench_scenes();
    c.bench_function("slide_all/20 scenes w20 s5", |b| {
        b.iter(|| slide_all(black_box(&scenes), VariantKind::SPlusD, 20, 5).unwrap())
    });

    let windows = bench_windows(&scenes);
    c.bench_function("degrade/420 windows r0.4", |b| {
        b.iter(|| degrade(black_box(&windows), 0.4, 7).unwrap())
    });

    let degraded = degrade(&windows, 0.4, 7).unwrap();
    c.bench_function("impute_last_known/420 windows", |b| {
        b.iter(|| {
            for w in &degraded {
                black_box(impute_last_known(w).unwrap());
            }
        })
    });
}

fn forest(c: &mut Criterion) {
    let scenes = bench_scenes();
    let windows = bench_windows(&scenes);
    let hp = RfHyperParams {
        n_trees: 25,
        min_leaf: 1,
        criterion: SplitCriterion::Gini,
        max_features: MaxFeatures::Sqrt,
    };
    let mut group = c.benchmark_group("forest");
    group.sample_size(10);
    group.bench_function("fit/420 windows 25 trees", |b| {
        b.iter(|| fit_forest(black_box(&windows), &hp, 11).unwrap())
    });
    let model = fit_forest(&windows, &hp, 11).unwrap();
    group.bench_function("score/420 windows", |b| {
        b.iter(|| model.predict_proba_batch(black_box(&windows)).unwrap())
    });
    group.finish();
}

fn gradients(c: &mut Criterion) {
    let hp = SeqHyperParams { hidden_dim: 32, ..SeqHyperParams::default() };
    let seq = SeqClassifier::new(5, &hp, 3).unwrap();
    let mut rng = rng_from(4, &[]);
    let rows: Vec<Vec<f64>> =
        (0..20).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let x = Mat::from_rows(&rows).unwrap();
    c.bench_function("seq_loss_and_grads/w20 h32", |b| {
        b.iter_batched(
            || rng_from(5, &[]),
            |mut r| seq.loss_and_grads(black_box(&x), 1.0, 0.1, &mut r).unwrap(),
            BatchSize::SmallInput,
        )
    });

    let mlp = MlpRegressor::new(100, 40, [32, 16], 6).unwrap();
    let input: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..1.0)).collect();
    let target: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..1.0)).collect();
    c.bench_function("mlp_loss_and_grads/100->40", |b| {
        b.iter(|| mlp.loss_and_grads(black_box(&input), black_box(&target)).unwrap())
    });
}

criterion_group!(benches, metrics, windowing, forest, gradients);
criterion_main!(benches);
