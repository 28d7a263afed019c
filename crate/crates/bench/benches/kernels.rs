use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lgcp::geometry::voronoi_weights;
use lgcp::latent::{spde2d_term, MaternPriors};
use lgcp::simulate::synthetic_window;
use lgcp::smoothing::kernel_intensity;
use lgcp::sparse::factor_triplets;
use lgcp::GridSpec;
use lgcp_bench::{mesh, uniform_points};

fn voronoi(c: &mut Criterion) {
    let w = synthetic_window();
    let mut g = c.benchmark_group("voronoi");
    for n in [500, 3000] {
        let pts = uniform_points(n, &w, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &pts, |b, pts| {
            b.iter(|| voronoi_weights(black_box(pts), &w).unwrap())
        });
    }
    g.finish();
}

fn cholesky(c: &mut Criterion) {
    let w = synthetic_window();
    let mut g = c.benchmark_group("spde_cholesky");
    for edge in [0.4, 0.2] {
        let m = Arc::new(mesh(&w, edge));
        let term = spde2d_term("s", Arc::clone(&m), &MaternPriors::default()).unwrap();
        let values = term.values(&[0.0, 0.0]).unwrap();
        let trip: Vec<(usize, usize, f64)> = term.pattern().iter().zip(values).map(|(&(i, j), v)| (i, j, v)).collect();
        g.bench_with_input(BenchmarkId::new("factor", m.vertices.len()), &trip, |b, t| {
            b.iter(|| factor_triplets(m.vertices.len(), black_box(t)).unwrap())
        });
        let f = factor_triplets(m.vertices.len(), &trip).unwrap();
        g.bench_function(BenchmarkId::new("selected_inverse", m.vertices.len()), |b| b.iter(|| f.selected_inverse()));
    }
    g.finish();
}

fn kernel(c: &mut Criterion) {
    let w = synthetic_window();
    let pts = uniform_points(3000, &w, 2);
    let spec = GridSpec::covering(&w, 110).unwrap();
    c.bench_function("kernel_intensity_3000", |b| b.iter(|| kernel_intensity(black_box(&pts), 0.3, spec, &w).unwrap()));
}

criterion_group!(benches, voronoi, cholesky, kernel);
criterion_main!(benches);
