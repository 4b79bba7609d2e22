//! Benchmarks for the hot paths of the evaluation pipeline: PCA, the
//! projection primitive, encoder forward passes, and metric aggregation.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use debias_core::data::default_gender_pairs;
use debias_core::interventions::{bind, DebiasConfig};
use debias_core::stereoset::{spearman, strength, TripleScores};
use debias_core::subspace::SubspaceSet;
use debias_core::synthetic::{seeded_model, synthetic_stereoset};
use debias_core::{pca, project_out, ForwardHooks, Matrix};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn unit(rng: &mut ChaCha8Rng, r: f64) -> f64 {
    (rng.next_u32() as f64 / u32::MAX as f64 * 2.0 - 1.0) * r
}

fn bench_linalg(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..32).map(|_| unit(&mut rng, 1.0)).collect())
        .collect();
    let diffs = Matrix::from_rows(&rows).unwrap();
    c.bench_function("pca_100x32_k2", |b| {
        b.iter(|| pca(black_box(&diffs), 2).unwrap())
    });

    let model = seeded_model(1, 64, 4, 4, 64);
    let pairs = default_gender_pairs();
    let set = SubspaceSet::estimate_all(&model, &pairs).unwrap();
    let basis = &set.get(debias_core::Location::FinalCls).unwrap().basis;
    let h: Vec<f64> = (0..64).map(|_| unit(&mut rng, 2.0)).collect();
    c.bench_function("project_out_d64_k2", |b| {
        b.iter(|| project_out(black_box(&h), black_box(basis), true).unwrap())
    });
}

fn bench_forward(c: &mut Criterion) {
    let model = seeded_model(2, 64, 4, 4, 64);
    let hooks = ForwardHooks::none();
    c.bench_function("forward_pair_d64_l4", |b| {
        b.iter(|| {
            model
                .forward_pair(
                    black_box("the man walked into the kitchen ."),
                    black_box("he stayed at home again today ."),
                    &hooks,
                )
                .unwrap()
        })
    });

    let pairs = default_gender_pairs();
    let set = SubspaceSet::estimate_all(&model, &pairs).unwrap();
    let hookset = bind(DebiasConfig::penult_attn(1, 1, 1, 1, 1), &model, &set).unwrap();
    let hooked = hookset.forward_hooks();
    c.bench_function("forward_pair_d64_l4_full_hooks", |b| {
        b.iter(|| {
            model
                .forward_pair(
                    black_box("the man walked into the kitchen ."),
                    black_box("he stayed at home again today ."),
                    &hooked,
                )
                .unwrap()
        })
    });
}

fn bench_metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scores: Vec<TripleScores> = (0..1000)
        .map(|i| TripleScores {
            id: format!("t{i:05}"),
            p_stereo: unit(&mut rng, 0.5) + 0.5,
            p_anti: unit(&mut rng, 0.5) + 0.5,
            p_unr: unit(&mut rng, 0.5) + 0.5,
            p_stereo_gs: unit(&mut rng, 0.5) + 0.5,
            p_anti_gs: unit(&mut rng, 0.5) + 0.5,
            p_unr_gs: unit(&mut rng, 0.5) + 0.5,
        })
        .collect();
    c.bench_function("strength_1000_top10pct", |b| {
        b.iter_batched(
            || scores.clone(),
            |s| strength(black_box(&s), 0.1).unwrap(),
            BatchSize::SmallInput,
        )
    });

    let x: Vec<f64> = (0..75).map(|_| unit(&mut rng, 1.0)).collect();
    let y: Vec<f64> = (0..75).map(|_| unit(&mut rng, 1.0)).collect();
    c.bench_function("spearman_n75", |b| {
        b.iter(|| spearman(black_box(&x), black_box(&y)).unwrap())
    });

    let triples = synthetic_stereoset(8, 4);
    let model = seeded_model(4, 32, 2, 2, 48);
    c.bench_function("score_8_triple_pairs_d32", |b| {
        b.iter(|| {
            debias_core::score_triples(
                black_box(&model),
                &debias_core::HookSet::baseline(),
                black_box(&triples),
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, bench_linalg, bench_forward, bench_metrics);
criterion_main!(benches);
