use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use normex_core::{
    level_grid, orthant_sup_distance, sample_method, solve_gq, truncated_moments, FamilyParams, Method, NormKind,
    NormexConfig, SolverOptions,
};
use std::hint::black_box;

const ALPHA: f64 = 2.3;

fn sampling(c: &mut Criterion) {
    let family = FamilyParams::mv_pareto_lomax(ALPHA, 3).unwrap();
    let count = 10_000;
    let mut g = c.benchmark_group("sample_n52_d3");
    g.throughput(Throughput::Elements(count as u64));
    g.sample_size(10);
    for m in Method::ALL {
        let cfg = NormexConfig::new(family, NormKind::L1, 52, count, 1);
        g.bench_function(BenchmarkId::from_parameter(m), |b| b.iter(|| sample_method(black_box(&cfg), m).unwrap()));
    }
    g.finish();
}

fn moments(c: &mut Criterion) {
    let mut g = c.benchmark_group("truncated_moments");
    for (name, f, norm) in [
        ("MvParetoLomax", FamilyParams::mv_pareto_lomax(ALPHA, 3).unwrap(), NormKind::L1),
        ("IndepParetoLomax", FamilyParams::indep_pareto_lomax(ALPHA, 3).unwrap(), NormKind::Linf),
        ("ClaytonParetoLomax", FamilyParams::clayton_pareto_lomax(ALPHA, 1.0 / ALPHA).unwrap(), NormKind::Linf),
        ("RadialParetoLomax", FamilyParams::radial_pareto_lomax(ALPHA, 3).unwrap(), NormKind::Linf),
    ] {
        g.bench_function(name, |b| b.iter(|| truncated_moments(&f, norm, black_box(7.5)).unwrap()));
    }
    g.finish();
}

fn geoquantile(c: &mut Criterion) {
    let family = FamilyParams::mv_pareto_lomax(ALPHA, 3).unwrap();
    let cfg = NormexConfig::new(family, NormKind::L1, 52, 20_000, 2);
    let sample = sample_method(&cfg, Method::DirectSum).unwrap().sample;
    let levels = level_grid(3).unwrap();
    let opts = SolverOptions::default();
    let mut g = c.benchmark_group("solve_gq_20k_d3");
    g.sample_size(20);
    for idx in [0, 100, 234] {
        let l = &levels[idx];
        g.bench_function(BenchmarkId::new("length", l.length), |b| b.iter(|| solve_gq(&sample, &l.level, &opts).unwrap()));
    }
    g.finish();
}

fn orthant(c: &mut Criterion) {
    let family = FamilyParams::indep_pareto_lomax(ALPHA, 2).unwrap();
    let a = family.sample(100_000, 3).unwrap();
    let b = family.sample(100_000, 4).unwrap();
    let mut g = c.benchmark_group("orthant_distance_100k_d2");
    g.sample_size(10);
    for grid in [10, 20] {
        g.bench_function(BenchmarkId::from_parameter(grid), |bch| {
            bch.iter(|| orthant_sup_distance(&a, &b, black_box(grid)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sampling, moments, geoquantile, orthant);
criterion_main!(benches);
