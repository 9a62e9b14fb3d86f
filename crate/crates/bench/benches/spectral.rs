use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use mhdlab_core::spectral::{leray_project, to_physical_pair, Grid2D, SpectralField};
use mhdlab_core::state::gaussian;

fn round_trip(c: &mut Criterion) {
    let mut group = c.benchmark_group("fft_round_trip");
    for n in [64, 128, 256] {
        let grid = Grid2D::unit_periodic(n);
        let f = gaussian(&grid, 0.5);
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| SpectralField::from_physical(f.grid(), &black_box(f).to_physical()))
        });
    }
    group.finish();
}

fn pair_transform(c: &mut Criterion) {
    let grid = Grid2D::unit_periodic(256);
    let f = gaussian(&grid, 0.5);
    let g = f.dx();
    c.bench_function("to_physical_pair_256", |b| {
        b.iter(|| to_physical_pair(black_box(&f), black_box(&g)))
    });
}

fn leray(c: &mut Criterion) {
    let grid = Grid2D::unit_periodic(256);
    let u = gaussian(&grid, 0.5);
    let v = u.dy();
    c.bench_function("leray_256", |b| b.iter(|| leray_project(black_box(&u), black_box(&v))));
}

criterion_group!(benches, round_trip, pair_transform, leray);
criterion_main!(benches);
