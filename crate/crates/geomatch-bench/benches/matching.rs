//! Benchmarks for the hot numeric paths: varifold distance and gradient,
//! flow shooting gradients, hybrid running cost, spline path energy.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use geomatch::hybrid::{hybrid_lagrangian_grad, IntrinsicStiffness, StiffnessVariant};
use geomatch::intrinsic::{self, SobolevCoeffs};
use geomatch::kernels::DeformationKernel;
use geomatch::lddmm::{LandmarkHamiltonian, VarifoldEndpoint};
use geomatch::ocontrol::shoot_objective;
use geomatch::spline::BSplineBasis;
use geomatch::varifold::{varifold_dist_sq, varifold_grad, VarifoldKernel};
use geomatch_bench::flow_pair;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn bench_varifold(c: &mut Criterion) {
    let kernel = VarifoldKernel::default();
    let mut group = c.benchmark_group("varifold_dist_sq");
    for n in [32usize, 128, 512] {
        let (a, b) = flow_pair(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| varifold_dist_sq(black_box(&a), black_box(&b), &kernel).unwrap())
        });
    }
    group.finish();

    let (a, b) = flow_pair(128);
    c.bench_function("varifold_grad/128", |bench| {
        bench.iter(|| varifold_grad(black_box(&a), black_box(&b), &kernel).unwrap())
    });
}

fn bench_shooting(c: &mut Criterion) {
    let (q0, q1) = flow_pair(32);
    let kernel = VarifoldKernel::default();
    let ham = LandmarkHamiltonian {
        kernel: DeformationKernel::new(1.0),
        dim: 2,
        num_vertices: 32,
    };
    let endpoint = VarifoldEndpoint::new(&q0, &q1, &kernel, 100.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p0: Vec<f64> = (0..64).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let x0 = q0.vertices().to_vec();
    c.bench_function("shoot_objective_grad/32x10", |bench| {
        bench.iter(|| shoot_objective(&ham, &endpoint, &x0, black_box(&p0), 10).unwrap())
    });
}

fn bench_hybrid_lagrangian(c: &mut Criterion) {
    let (q0, _) = flow_pair(64);
    let kernel = DeformationKernel::new(0.7);
    let stiff = IntrinsicStiffness {
        weight: 1.0,
        variant: StiffnessVariant::Tangential,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a: Vec<f64> = (0..128).map(|_| rng.gen_range(-0.5..0.5)).collect();
    c.bench_function("hybrid_lagrangian_grad/64", |bench| {
        bench.iter(|| hybrid_lagrangian_grad(&q0, black_box(&a), &kernel, &stiff).unwrap())
    });
}

fn bench_path_energy(c: &mut Criterion) {
    let basis_t = BSplineBasis::clamped(10, 3, 0.0, 1.0).unwrap();
    let basis_th = BSplineBasis::periodic(40, 4, std::f64::consts::TAU).unwrap();
    let circle = geomatch::fixtures::circle(64, 1.0, (0.0, 0.0));
    let (row, _) = intrinsic::fit_curve_spline(&basis_th, &circle, 1e-2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut coef = Vec::new();
    for _ in 0..10 {
        let mut r = row.clone();
        for v in r.iter_mut() {
            *v += rng.gen_range(-0.02..0.02);
        }
        coef.extend(r);
    }
    let path = intrinsic::SplinePath::new(basis_t, basis_th, 2, coef).unwrap();
    let coeffs = SobolevCoeffs {
        a0: 1.0,
        a1: 1.0,
        a2: 0.5,
    };
    c.bench_function("path_energy_grad/10x40", |bench| {
        bench.iter(|| intrinsic::path_energy_grad(black_box(&path), &coeffs, 3, 5).unwrap())
    });
}

criterion_group!(
    benches,
    bench_varifold,
    bench_shooting,
    bench_hybrid_lagrangian,
    bench_path_energy
);
criterion_main!(benches);
