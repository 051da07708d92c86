use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsmd_core::assignment::build_cluster_problem;
use rsmd_core::clustering::{cluster_devices, features_from_training};
use rsmd_core::game::solve_brs;
use rsmd_core::hungarian::max_weight_assignment;
use rsmd_core::{run_scheme, NetworkConfig, NetworkDrop, RunOptions, SchemeKind};

fn brs(c: &mut Criterion) {
    let cfg = NetworkConfig::default();
    let drop = NetworkDrop::generate(&cfg, 1).unwrap();
    let prices = vec![1.0; cfg.num_rrbs];
    let one = build_cluster_problem(&[0, 1], 0, &[0], &prices, drop.channels(), &cfg);
    let four = build_cluster_problem(&[0, 1], 0, &[0, 1, 2, 3], &prices, drop.channels(), &cfg);
    c.bench_function("brs/1_rrb", |b| b.iter(|| solve_brs(black_box(&one)).unwrap()));
    c.bench_function("brs/4_rrbs", |b| b.iter(|| solve_brs(black_box(&four)).unwrap()));
}

fn hungarian(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w: Vec<Vec<f64>> = (0..50).map(|_| (0..50).map(|_| rng.random::<f64>()).collect()).collect();
    c.bench_function("hungarian/50x50", |b| b.iter(|| max_weight_assignment(black_box(&w)).unwrap()));
}

fn clustering(c: &mut Criterion) {
    let cfg = NetworkConfig::default();
    let drop = NetworkDrop::generate(&cfg, 2).unwrap();
    c.bench_function("clustering/pca_m50", |b| {
        b.iter(|| {
            let f = features_from_training(black_box(&drop.training), cfg.pca_components).unwrap();
            cluster_devices(&f, cfg.pca_weight).unwrap()
        })
    });
}

fn small_drop(c: &mut Criterion) {
    let cfg = NetworkConfig { num_d2d_links: 8, num_errhs: 2, num_rrbs: 8, max_clusters_per_errh: 2, ..Default::default() };
    let drop = NetworkDrop::generate(&cfg, 3).unwrap();
    let mut g = c.benchmark_group("drop");
    g.sample_size(10);
    for kind in [SchemeKind::Rsmd, SchemeKind::FraWf] {
        g.bench_function(kind.label(), |b| b.iter(|| run_scheme(kind, black_box(&drop), &RunOptions::default()).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, brs, hungarian, clustering, small_drop);
criterion_main!(benches);
