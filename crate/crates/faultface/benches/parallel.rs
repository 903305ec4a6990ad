//! Rayon vs sequential comparison for the data-parallel hot paths:
//! batch portrait rendering, all-pairs SSIM, and the matrix product
//! behind every layer. Build with the default `parallel` feature so both
//! paths exist; the `_seq` functions are the fallback used when the
//! feature is disabled.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use faultface::dataset::{BehaviorClass, Window, WINDOW_LEN};
use faultface::metrics;
use faultface::portrait::{self, MorseParams, Portrait, PortraitKind, PIXELS};
use faultface::tensor;

fn windows(n: usize) -> Vec<Window> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|i| Window {
            values: (0..WINDOW_LEN).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            source_id: format!("w{}", i),
            index: i,
            label: BehaviorClass::Ball,
        })
        .collect()
}

fn portraits(n: usize) -> Vec<Portrait> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    (0..n)
        .map(|i| {
            Portrait::new(
                (0..PIXELS).map(|_| rng.gen()).collect(),
                PortraitKind::Cmr,
                BehaviorClass::Nominal,
                format!("p{}", i),
            )
            .unwrap()
        })
        .collect()
}

fn bench_portrait_batch(c: &mut Criterion) {
    let ws = windows(64);
    let rates = vec![12_000.0; ws.len()];
    let morse = MorseParams::default();
    let mut group = c.benchmark_group("portrait_batch_cwt");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("seq", ws.len()), |b| {
        b.iter(|| portrait::make_portraits_seq(PortraitKind::CwtMorse, &ws, &rates, &morse).unwrap())
    });
    #[cfg(feature = "parallel")]
    group.bench_function(BenchmarkId::new("par", ws.len()), |b| {
        b.iter(|| portrait::make_portraits(PortraitKind::CwtMorse, &ws, &rates, &morse).unwrap())
    });
    group.finish();
}

fn bench_ssim_allpairs(c: &mut Criterion) {
    let originals = portraits(48);
    let generated = portraits(48);
    let mut group = c.benchmark_group("ssim_all_pairs");
    group.sample_size(20);
    group.bench_function(BenchmarkId::new("seq", originals.len() * generated.len()), |b| {
        b.iter(|| metrics::ssim_distribution_seq(&originals, &generated).unwrap())
    });
    #[cfg(feature = "parallel")]
    group.bench_function(BenchmarkId::new("par", originals.len() * generated.len()), |b| {
        b.iter(|| metrics::ssim_distribution(&originals, &generated).unwrap())
    });
    group.finish();
}

fn bench_matmul(c: &mut Criterion) {
    let (m, k, n) = (512, 288, 256);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a: Vec<f64> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; m * n];
    let mut group = c.benchmark_group("matmul_512x288x256");
    group.sample_size(30);
    group.bench_function("seq", |bench| {
        bench.iter(|| tensor::matmul_seq(&a, &b, m, k, n, &mut out))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("par", |bench| {
        bench.iter(|| tensor::matmul_par(&a, &b, m, k, n, &mut out))
    });
    group.finish();
}

criterion_group!(benches, bench_portrait_batch, bench_ssim_allpairs, bench_matmul);
criterion_main!(benches);
