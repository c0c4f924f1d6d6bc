use std::hint::black_box;

use cqnls_core::integrator::{StepperConfig, Stepper};
use cqnls_core::io::{generate_data, DataGenSpec};
use cqnls_core::model::nonlinearity_z;
use cqnls_core::normal_form::{invert, transform, NFConfig};
use cqnls_core::{Field, GammaModel, Grid};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn data(n: usize) -> (Field, GammaModel) {
    let grid = Grid::cube(2, n, 32.0).unwrap();
    let spec = DataGenSpec {
        amplitude: 0.05,
        ..DataGenSpec::default()
    };
    (generate_data(&spec, &grid).unwrap(), GammaModel::new(0.5).unwrap())
}

fn fft(c: &mut Criterion) {
    let mut g = c.benchmark_group("fft_round_trip");
    for n in [64, 128, 256] {
        let (u, _) = data(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| {
            b.iter(|| black_box(u.to_spectral().into_physical()))
        });
    }
    g.finish();
}

fn strang_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("strang_step");
    for n in [64, 128, 256] {
        let (u, m) = data(n);
        let st = Stepper::new(u.grid(), 1e-3, &m, &StepperConfig::default());
        let mut psi = u.map(|v| v + 1.0);
        g.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| st.step(black_box(&mut psi)).unwrap())
        });
    }
    g.finish();
}

fn nz(c: &mut Criterion) {
    let (u, m) = data(128);
    c.bench_function("nonlinearity_z/128", |b| b.iter(|| nonlinearity_z(black_box(&u), &m).unwrap()));
}

fn normal_form(c: &mut Criterion) {
    let (u, m) = data(128);
    let z = transform(&u, &m).unwrap();
    let cfg = NFConfig::default();
    c.bench_function("transform/128", |b| b.iter(|| transform(black_box(&u), &m).unwrap()));
    c.bench_function("invert/128", |b| b.iter(|| invert(black_box(&z), &m, &cfg).unwrap()));
}

criterion_group!(benches, fft, strang_step, nz, normal_form);
criterion_main!(benches);
