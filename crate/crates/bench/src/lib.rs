//! Shared fixtures for the benchmarks.

use lgcp::geometry::{build_mesh, Mesh, MeshSettings};
use lgcp::simulate::{simulate_study, Scenario};
use lgcp::{Point, PointPattern, Window};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uniform_points(n: usize, window: &Window, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = window.bbox();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = Point::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if window.contains(p) {
            out.push(p);
        }
    }
    out
}

pub fn mesh(window: &Window, max_edge: f64) -> Mesh {
    build_mesh(window, &MeshSettings::new(max_edge)).expect("mesh builds")
}

/// Simulated study dataset with `n_controls` controls and `n_cases` cases.
pub fn study_pattern(n_controls: usize, n_cases: usize, phi: f64) -> (PointPattern, Window, Point) {
    let mut sc = Scenario::full_study(7);
    sc.n_controls = n_controls;
    sc.case_counts = vec![n_cases];
    sc.phis = vec![phi];
    let st = simulate_study(&sc).expect("simulation runs");
    let pp = st.datasets[0].pattern(&st.controls).expect("valid pattern");
    (pp, sc.window, sc.source)
}
