use criterion::{criterion_group, criterion_main, Criterion};
use phasecal_bench::fixture;
use phasecal_core::eirp::{
    calibrated_codebook, coverage_db, eirp_scale, sphere_directions, uncalibrated_codebook,
};
use phasecal_core::{ErrorSpec, DEFAULT_DIRECTIONS_DEG};
use std::hint::black_box;

fn codebook(c: &mut Criterion) {
    let f = fixture(4, 3, 20.0, 11);
    let config = *f.truth.config();
    c.bench_function("codebook/ideal", |b| {
        b.iter(|| uncalibrated_codebook(black_box(&config), &DEFAULT_DIRECTIONS_DEG).unwrap())
    });
    c.bench_function("codebook/estimated", |b| {
        b.iter(|| calibrated_codebook(black_box(&f.estimate), &DEFAULT_DIRECTIONS_DEG).unwrap())
    });
    let book = calibrated_codebook(&f.estimate, &DEFAULT_DIRECTIONS_DEG).unwrap();
    let thetas = sphere_directions(1000).unwrap();
    let scale = eirp_scale(&config, ErrorSpec::default().max_amplitude());
    c.bench_function("coverage/1000", |b| {
        b.iter(|| coverage_db(black_box(&f.truth), &book, &thetas, scale).unwrap())
    });
}

criterion_group!(benches, codebook);
criterion_main!(benches);
