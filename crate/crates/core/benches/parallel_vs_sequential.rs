//! Hot paths on a one-thread rayon pool versus the default pool. Build with
//! `--no-default-features` to measure the plain sequential code instead.

use claimclust_core::autotune::{self, AutotuneParams};
use claimclust_core::geometry::{self, DEFAULT_MEMORY_CAP};
use claimclust_core::hac::{self, ClusterAssignment};
use claimclust_core::{metrics, synth};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("1-thread", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("default", rayon::ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn bench(c: &mut Criterion) {
    let (m, _) = synth::blobs(2000, 40, 64, 0.05, 1);
    let (big, big_labels) = synth::blobs(6000, 40, 64, 0.05, 2);
    let dend = hac::build_dendrogram(&m).unwrap();
    let pred = ClusterAssignment::from_raw(&big_labels);

    let mut group = c.benchmark_group("parallel_vs_sequential");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("pairwise_distances_2000", name), |b| {
            b.iter(|| pool.install(|| geometry::pairwise_cosine_distances(&m, 256, DEFAULT_MEMORY_CAP).unwrap()))
        });
        group.bench_function(BenchmarkId::new("ward_matrix_2000", name), |b| {
            b.iter(|| pool.install(|| hac::build_dendrogram_with(&m, hac::WardBackend::Matrix).unwrap()))
        });
        group.bench_function(BenchmarkId::new("ward_centroid_2000", name), |b| {
            b.iter(|| pool.install(|| hac::build_dendrogram_with(&m, hac::WardBackend::Centroid).unwrap()))
        });
        group.bench_function(BenchmarkId::new("silhouette_6000", name), |b| {
            b.iter(|| pool.install(|| metrics::silhouette(&big, &pred, 5000, 0).unwrap()))
        });
        group.bench_function(BenchmarkId::new("autotune_2000", name), |b| {
            b.iter(|| pool.install(|| autotune::select_threshold(&m, &dend, &AutotuneParams::default()).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
