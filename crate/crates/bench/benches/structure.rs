use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gari_bench::{fixture_path, load_models, load_typed};
use gari_core::dem::load_dem_file;
use gari_core::gari::{build_correlated, GariModel, MemoryBasis};

fn parse(c: &mut Criterion) {
    let path = fixture_path("bb72_p0.001.dem.gz");
    c.bench_function("parse/bb72", |b| b.iter(|| black_box(load_dem_file(&path).unwrap())));
}

fn transform(c: &mut Criterion) {
    let dem = load_typed("bb72_p0.001");
    c.bench_function("transform/bb72", |b| {
        b.iter(|| {
            let cm = build_correlated(black_box(&dem), MemoryBasis::Z).unwrap();
            black_box(GariModel::from_correlated(&cm).unwrap())
        })
    });
}

fn four_cycles(c: &mut Criterion) {
    let mut group = c.benchmark_group("count_4cycles");
    group.sample_size(10);
    let (cm, gm) = load_models("bb72_p0.001");
    group.bench_function("bb72/d_xyz", |b| b.iter(|| black_box(cm.matrix.count_4cycles())));
    group.bench_function("bb72/bottom", |b| b.iter(|| black_box(gm.bottom.count_4cycles())));
    group.finish();
}

criterion_group!(benches, parse, transform, four_cycles);
criterion_main!(benches);
