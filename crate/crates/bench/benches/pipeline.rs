//! Benchmarks for the hot pipeline stages: homogenization, embedding,
//! soft assignment, K-Means plus validity indices, and the 2-D projection.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use crashprint_bench::{blobs, corpus, dataset};
use crashprint_core::cluster::{kmeans_fit, silhouette};
use crashprint_core::config::PipelineConfig;
use crashprint_core::dec::{soft_assign, target_distribution, Centroids};
use crashprint_core::embed::{train_embedder, TrainConfig, Variant};
use crashprint_core::ingest::{stack_dataset, Split};
use crashprint_core::numerics::OptimizerKind;
use crashprint_core::pipeline::preprocess;
use crashprint_core::tsne::{tsne, TsneConfig};

fn bench_preprocess(c: &mut Criterion) {
    let (traces, _) = corpus(25);
    let config = PipelineConfig {
        t: 30,
        ..PipelineConfig::default()
    };
    c.bench_function("preprocess_100_sessions", |b| {
        b.iter(|| preprocess(black_box(&traces), &config, None, Split::Train).unwrap())
    });
}

fn bench_embedding(c: &mut Criterion) {
    let dataset = dataset(25, 30);
    let train_config = TrainConfig {
        variant: Variant::Ae,
        epochs: 8,
        batch_size: 32,
        learning_rate: 1e-3,
        optimizer: OptimizerKind::Adam,
        z_len: None,
        seed: 99,
    };
    let (model, _) = train_embedder(&dataset, &train_config).unwrap();
    let stacked = stack_dataset(&dataset.tensors).unwrap();
    c.bench_function("embed_100_sessions", |b| {
        b.iter(|| model.embed_matrix(black_box(&stacked)).unwrap())
    });
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("ae_8_epochs_100_sessions", |b| {
        b.iter(|| train_embedder(black_box(&dataset), &train_config).unwrap())
    });
    group.finish();
}

fn bench_soft_assignment(c: &mut Criterion) {
    let points = blobs(100, 4, 16);
    let fit = kmeans_fit(&points, 20, 7, 2).unwrap();
    let centroids = Centroids::new(fit.centroids).unwrap();
    c.bench_function("soft_assign_400x16_k20", |b| {
        b.iter(|| soft_assign(black_box(&points), &centroids).unwrap())
    });
    let q = soft_assign(&points, &centroids).unwrap();
    c.bench_function("target_distribution_400x20", |b| {
        b.iter(|| target_distribution(black_box(&q)))
    });
}

fn bench_clustering(c: &mut Criterion) {
    let points = blobs(100, 4, 16);
    c.bench_function("kmeans_k4_400x16", |b| {
        b.iter(|| kmeans_fit(black_box(&points), 4, 7, 4).unwrap())
    });
    let fit = kmeans_fit(&points, 4, 7, 4).unwrap();
    c.bench_function("silhouette_400x16", |b| {
        b.iter(|| silhouette(black_box(&points), &fit.labels).unwrap())
    });
}

fn bench_projection(c: &mut Criterion) {
    let points = blobs(50, 4, 16);
    let config = TsneConfig {
        perplexity: 15.0,
        iterations: 100,
        exaggeration_iterations: 30,
        momentum_switch_iteration: 30,
        seed: 7,
        ..TsneConfig::default()
    };
    let mut group = c.benchmark_group("projection");
    group.sample_size(10);
    group.bench_function("tsne_200_points_100_iters", |b| {
        b.iter(|| tsne(black_box(&points), &config).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_preprocess,
    bench_embedding,
    bench_soft_assignment,
    bench_clustering,
    bench_projection
);
criterion_main!(benches);
