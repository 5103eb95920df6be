use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cpgan_core::evaluation::{compute_identification, compute_verification, ScoreSet};
use cpgan_core::layers::{Conv2d, Init};
use cpgan_core::networks::{ArchConfig, Generator};
use cpgan_core::Tensor;

fn random_tensor(c: usize, n: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let data = (0..c * n * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(c, n, h, w, data).unwrap()
}

/// Desk-scale architecture.
fn desk_arch() -> ArchConfig {
    ArchConfig {
        base_width: 16,
        disc_base_width: 32,
        ..ArchConfig::default()
    }
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut layer = Conv2d::<f32>::new("bench", 32, 64, 3, 2, 1, Init::He(0.0), &mut rng);
    let x = random_tensor(32, 16, 32, 32, &mut rng);
    let y = layer.forward(&x).unwrap();
    let dy = random_tensor(y.channels, y.batch, y.height, y.width, &mut rng);
    c.bench_function("conv3x3_s2 32->64 16x32x32 forward", |b| {
        b.iter(|| layer.forward(black_box(&x)).unwrap())
    });
    c.bench_function("conv3x3_s2 32->64 16x32x32 backward", |b| {
        b.iter(|| layer.backward(black_box(&x), black_box(&dy), true))
    });
}

fn generator(c: &mut Criterion) {
    let arch = desk_arch();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = Generator::<f32>::new("profile", &arch, 0);
    let x = random_tensor(3, 16, 64, 64, &mut rng);
    let mut group = c.benchmark_group("generator desk batch 16");
    group.sample_size(10);
    group.bench_function("forward", |b| b.iter(|| g.forward(black_box(&x)).unwrap()));
    group.bench_function("forward+backward", |b| {
        b.iter_batched(
            || g.clone(),
            |mut g| {
                let (recon, cache) = g.forward_train(&x).unwrap();
                g.backward(&cache, Some(&recon), None);
                g
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let scores = ScoreSet {
        genuine: (0..2_000).map(|_| rng.random_range(-1.0..2.0)).collect(),
        impostor: (0..20_000).map(|_| rng.random_range(-2.0..1.0)).collect(),
    };
    c.bench_function("verification 2k genuine / 20k impostor", |b| {
        b.iter(|| compute_verification(black_box(&scores)).unwrap())
    });
    let embed = |rng: &mut ChaCha8Rng, n: usize| -> Vec<(Vec<f32>, u32)> {
        (0..n)
            .map(|i| {
                (
                    (0..256).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    (i % 100) as u32,
                )
            })
            .collect()
    };
    let probes = embed(&mut rng, 500);
    let gallery = embed(&mut rng, 100);
    c.bench_function("identification 500 probes x 100 gallery, d=256", |b| {
        b.iter(|| compute_identification(black_box(&probes), black_box(&gallery)).unwrap())
    });
}

criterion_group!(benches, conv, generator, metrics);
criterion_main!(benches);
