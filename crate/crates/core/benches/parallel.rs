//! Sequential vs rayon execution of the per-seed loops.
//!
//! Without the `parallel` feature both variants run sequentially.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pathdyn::advect::{IntegrationParams, SeedGrid};
use pathdyn::distribution::{fit_ranges, Region, DEFAULT_CLAMP_PERCENTILES};
use pathdyn::dynamics::{ftle_field, FtleMethod, StrainReconstruction};
use pathdyn::exec::Exec;
use pathdyn::field::{make_analytic, GridSpec, VectorField2D};
use pathdyn::store::{build_cache, DynamicsCache};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn gyre() -> (VectorField2D, IntegrationParams, SeedGrid) {
    let spec = GridSpec::from_extent((0.0, 2.0), (0.0, 1.0), 129, 65, (0.0, 10.0), 101).unwrap();
    let field = make_analytic("double_gyre", spec).unwrap();
    let params = IntegrationParams::new(10.0, -5.0, 0.01).unwrap();
    let seeds = SeedGrid::from_grid(&spec, 2).unwrap();
    (field, params, seeds)
}

fn bench_build(c: &mut Criterion) {
    let (field, params, seeds) = gyre();
    let mut group = c.benchmark_group("build_cache");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| build_cache(&field, &params, &seeds, exec).unwrap())
        });
    }
    group.finish();
}

fn cache() -> DynamicsCache {
    let (field, params, seeds) = gyre();
    build_cache(&field, &params, &seeds, Exec::Parallel).unwrap().0
}

fn bench_query(c: &mut Criterion) {
    let cache = cache();
    let region = Region::circle(0.5, 0.5, 0.1);
    let mut group = c.benchmark_group("query");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| cache.query(black_box(&region), None, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_ranges(c: &mut Criterion) {
    let cache = cache();
    let mut group = c.benchmark_group("fit_ranges");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| fit_ranges(&cache, DEFAULT_CLAMP_PERCENTILES, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_ftle(c: &mut Criterion) {
    let (field, params, seeds) = gyre();
    let mut group = c.benchmark_group("ftle_flow_map");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| ftle_field(&field, &params, &seeds, FtleMethod::FlowMap, StrainReconstruction::default(), exec))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_build, bench_query, bench_ranges, bench_ftle);
criterion_main!(benches);
