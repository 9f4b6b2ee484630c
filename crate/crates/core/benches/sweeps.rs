//! Sequential against parallel execution on the crate's sweeps.

use std::f64::consts::FRAC_PI_2;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wpd_core::gpt::{BinaryMeasurement, GptVector, StateSpaceModel};
use wpd_core::interferometer::{sample_counts_with, NoiseModel};
use wpd_core::ontic::{feasibility_boundary_with, uniform_grid, BoundarySweep};
use wpd_core::orbit::symmetry_scan_with;
use wpd_core::pipeline::Experiment;
use wpd_core::tomography::fit_gpt_with;
use wpd_core::Exec;

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn boundary(c: &mut Criterion) {
    let sweep = BoundarySweep::Depolarizing {
        values: uniform_grid(0.0, 0.5, 501),
        reflectivity: 0.75,
    };
    let mut g = c.benchmark_group("feasibility_boundary");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| feasibility_boundary_with(black_box(&sweep), 1e-9, exec).unwrap())
        });
    }
    g.finish();
}

fn scan(c: &mut Criterion) {
    let disc = StateSpaceModel::disc(4);
    let z = BinaryMeasurement::in_plane("Z", 4, 0.0).unwrap();
    let x = BinaryMeasurement::in_plane("X", 4, FRAC_PI_2).unwrap();
    let mut g = c.benchmark_group("symmetry_scan");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| symmetry_scan_with(black_box(&disc), &z, &x, 64, exec).unwrap())
        });
    }
    g.finish();
}

fn experiment() -> (Vec<(String, GptVector)>, Vec<BinaryMeasurement>) {
    let e = Experiment::standard(0.75).unwrap();
    let noise = NoiseModel::depolarizing(0.05).unwrap();
    (
        e.noisy_states(&noise).unwrap(),
        e.noisy_measurements(&noise).unwrap(),
    )
}

fn sampling(c: &mut Criterion) {
    let (states, ms) = experiment();
    let mut g = c.benchmark_group("sample_counts");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sample_counts_with(black_box(&states), &ms, 100_000, 1, exec).unwrap())
        });
    }
    g.finish();
}

fn tomography(c: &mut Criterion) {
    let (states, ms) = experiment();
    let counts = sample_counts_with(&states, &ms, 100_000, 1, Exec::Sequential).unwrap();
    let mut g = c.benchmark_group("tomography");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| fit_gpt_with(black_box(&counts), &[2, 3, 4, 5], 1, 4, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, boundary, scan, sampling, tomography);
criterion_main!(benches);
