use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use rbm_bench::{reference_two_masses, velocity_grid};
use rbm_core::scattering::{angle_edges, dumbbell_cell, estimate_cell_operator};
use rbm_core::spectra::{spectrum, two_masses_operator};
use rbm_core::stats::make_stream;
use rbm_core::two_masses::kernel_k;

fn kernel(c: &mut Criterion) {
    let params = reference_two_masses();
    c.bench_function("relative kernel evaluation", |b| {
        b.iter(|| kernel_k(black_box(1.3), black_box(0.8), &params))
    });
}

fn nystrom(c: &mut Criterion) {
    let params = reference_two_masses();
    let mut group = c.benchmark_group("nystrom");
    group.sample_size(10);
    for n in [100, 200] {
        let grid = velocity_grid(n);
        group.bench_function(format!("operator n={n}"), |b| b.iter(|| two_masses_operator(&params, &grid).unwrap()));
        let op = two_masses_operator(&params, &grid).unwrap();
        group.bench_function(format!("spectrum n={n}"), |b| b.iter(|| spectrum(&op, 2).unwrap()));
    }
    group.finish();
}

fn cell_operator(c: &mut Criterion) {
    let cell = dumbbell_cell(0.5, 64).unwrap();
    let edges = angle_edges(20).unwrap();
    let mut group = c.benchmark_group("cell");
    group.sample_size(10);
    group.bench_function("operator 20 bins x 1000", |b| {
        b.iter(|| estimate_cell_operator(&cell, &edges, 1000, &make_stream(4)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, kernel, nystrom, cell_operator);
criterion_main!(benches);
