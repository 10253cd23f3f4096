use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use pfg_core::field::{pfg_loss_with_scores, particle_scores, Activation, DivergenceMode, MlpParams};
use pfg_core::kernels::{svgd_direction_with_scores, KernelSpec};
use pfg_core::metrics::{mmd_rbf, MmdBandwidth, MmdVariant};
use pfg_core::targets::GaussianTarget;
use pfg_core::{sample_gaussian, ExecPolicy, RngHandle, SpdMatrix};

const POLICIES: [(&str, ExecPolicy); 2] = [("sequential", ExecPolicy::Sequential), ("parallel", ExecPolicy::Parallel)];

fn loss(c: &mut Criterion) {
    let d = 10;
    let target = GaussianTarget::standard(d);
    let mut rng = RngHandle::new(0);
    let model = MlpParams::init(&mut rng, d, 32, Activation::Tanh, 1.0);
    let h = vec![1.0; d];
    let mut group = c.benchmark_group("pfg_loss");
    for n in [100, 1000] {
        let xs = sample_gaussian(&mut rng, &DVector::zeros(d), &SpdMatrix::identity(d), n).unwrap();
        let scores = particle_scores(&target, &xs, ExecPolicy::Sequential).unwrap();
        for (name, policy) in POLICIES {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| pfg_loss_with_scores(&model, &xs, &scores, &h, DivergenceMode::Exact, policy).unwrap())
            });
        }
    }
    group.finish();
}

fn svgd(c: &mut Criterion) {
    let d = 10;
    let target = GaussianTarget::standard(d);
    let mut rng = RngHandle::new(1);
    let mut group = c.benchmark_group("svgd_direction");
    group.sample_size(20);
    for n in [100, 1000] {
        let xs = sample_gaussian(&mut rng, &DVector::zeros(d), &SpdMatrix::identity(d), n).unwrap();
        let scores = particle_scores(&target, &xs, ExecPolicy::Sequential).unwrap();
        let kernel = KernelSpec::rbf_median().resolve(&xs).unwrap();
        for (name, policy) in POLICIES {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| svgd_direction_with_scores(black_box(&xs), &scores, &kernel, policy).unwrap())
            });
        }
    }
    group.finish();
}

fn mmd(c: &mut Criterion) {
    let mut rng = RngHandle::new(2);
    let x = sample_gaussian(&mut rng, &DVector::zeros(3), &SpdMatrix::identity(3), 1000).unwrap();
    let y = sample_gaussian(&mut rng, &DVector::zeros(3), &SpdMatrix::identity(3), 1000).unwrap();
    let mut group = c.benchmark_group("mmd_rbf");
    group.sample_size(20);
    for (name, policy) in POLICIES {
        group.bench_function(name, |b| {
            b.iter(|| mmd_rbf(&x, &y, MmdBandwidth::Fixed(1.0), MmdVariant::Unbiased, policy).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, loss, svgd, mmd);
criterion_main!(benches);
