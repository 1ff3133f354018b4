use std::f64::consts::FRAC_PI_4;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use s3flat_core::construct::{helicoidal_params, theorem1_orbit_profile};
use s3flat_core::mesh::DEFAULT_POLE;
use s3flat_core::{integrate, mesh_from_patch, reconstruct, theorem1_patch, verify, GridSpec, Kind, VerifyInput};

fn constructions(c: &mut Criterion) {
    let y = theorem1_patch(2.0, 3.0, false).unwrap();
    let grid = GridSpec::square(64, 64);
    c.bench_function("mesh_theorem1_64x64", |b| b.iter(|| mesh_from_patch(black_box(&y), &grid, DEFAULT_POLE).unwrap()));
    c.bench_function("ode_integrate_h1e-3", |b| b.iter(|| integrate(5.0, 35.0, FRAC_PI_4, black_box(0.1), 0.5, 1e-3).unwrap()));

    let alpha = helicoidal_params(2.0, 3.0, 35.0).unwrap().alpha;
    let prof = theorem1_orbit_profile(2.0, 3.0, 35.0, 2.0, 1e-3).unwrap();
    c.bench_function("reconstruct_2_3", |b| b.iter(|| reconstruct(alpha, 35.0, black_box(&prof)).unwrap()));
}

fn verification(c: &mut Criterion) {
    let mut g = c.benchmark_group("verify");
    g.sample_size(10);
    for kind in [Kind::Theorem1, Kind::Helicoidal, Kind::Ode, Kind::Lame] {
        let inp = VerifyInput::new(kind);
        g.bench_function(kind.name(), |b| b.iter(|| verify(black_box(&inp)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, constructions, verification);
criterion_main!(benches);
