//! Parallel vs sequential throughput on the grid-sweep kernels.
//! Placeholder until the certification and Lyapunov kernels land.

use criterion::{criterion_group, criterion_main, Criterion};
use phdyn::exec::{min_indexed, ExecMode, UnitGrid};

fn bench_grid_min(c: &mut Criterion) {
    let grid = UnitGrid::new(3, 32);
    let kernel = |i: usize| {
        let p = grid.point(i);
        p.iter().map(|x| (x * 12.9898).sin()).sum::<f64>()
    };
    let mut group = c.benchmark_group("grid_min");
    group.bench_function("parallel", |b| {
        b.iter(|| min_indexed(ExecMode::Parallel, grid.len(), kernel))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| min_indexed(ExecMode::Sequential, grid.len(), kernel))
    });
    group.finish();
}

criterion_group!(benches, bench_grid_min);
criterion_main!(benches);
