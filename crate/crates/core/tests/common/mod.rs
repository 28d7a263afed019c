#![allow(dead_code)]

use lgcp::geometry::{build_mesh, voronoi_weights, MeshSettings};
use lgcp::latent::{rw1_term, RW1_PRIOR};
use lgcp::lgcp::{augment, Integration};
use lgcp::{Point, PointPattern, Window};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_points(rng: &mut ChaCha8Rng, n: usize, w: &Window) -> Vec<Point> {
    let (lo, hi) = w.bbox();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = Point::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if w.contains(p) {
            out.push(p);
        }
    }
    out
}

/// Rectangle with one rectangular hole.
pub fn holed_window(width: f64, height: f64) -> Window {
    let (hx, hy) = (width * 0.4, height * 0.4);
    Window::new(
        vec![Point::new(0.0, 0.0), Point::new(width, 0.0), Point::new(width, height), Point::new(0.0, height)],
        vec![vec![
            Point::new(hx, hy),
            Point::new(hx, hy + height * 0.15),
            Point::new(hx + width * 0.2, hy + height * 0.15),
            Point::new(hx + width * 0.2, hy),
        ]],
    )
    .unwrap()
}

pub fn gaussian_log_density(y: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let chol = cov.clone().cholesky().unwrap();
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + logdet + y.dot(&chol.solve(y)))
}

/// `K_nu(x)` from `int_0^inf exp(-x cosh t) cosh(nu t) dt` by the trapezoid rule.
pub fn bessel_k_quad(nu: f64, x: f64) -> f64 {
    let h = 1e-3;
    let mut s = 0.5 * (-x).exp();
    let mut t: f64 = h;
    loop {
        let v = (-x * t.cosh()).exp() * (nu * t).cosh();
        s += v;
        if v < 1e-300 || t > 50.0 {
            break;
        }
        t += h;
    }
    s * h
}

pub type Check = Result<(), String>;

/// RW1 precision is `tau` times the path Laplacian, annihilates constants
/// and has exactly one zero eigenvalue.
pub fn check_rw1_structure(r: usize, log_tau: f64) -> Check {
    let knots: Vec<f64> = (0..r).map(|k| k as f64 * 0.7).collect();
    let term = rw1_term("u", knots, RW1_PRIOR).map_err(|e| e.to_string())?;
    let q = term.dense_precision(&[log_tau]).map_err(|e| e.to_string())?;
    let tau = log_tau.exp();
    for i in 0..r {
        for j in 0..r {
            let want = if i == j {
                tau * if i == 0 || i == r - 1 { 1.0 } else { 2.0 }
            } else if i.abs_diff(j) == 1 {
                -tau
            } else {
                0.0
            };
            if (q[(i, j)] - want).abs() > 1e-12 * tau.max(1.0) {
                return Err(format!("Q[{i},{j}] = {} instead of {want}", q[(i, j)]));
            }
        }
        let row: f64 = (0..r).map(|j| q[(i, j)]).sum();
        if row.abs() > 1e-12 * tau.max(1.0) {
            return Err(format!("row {i} sums to {row}"));
        }
    }
    let eig = q.symmetric_eigen();
    let zeros = eig.eigenvalues.iter().filter(|v| v.abs() < 1e-9 * tau).count();
    if zeros != 1 {
        return Err(format!("{zeros} zero eigenvalues"));
    }
    if term.rank_deficiency() != 1 || term.constraints != vec![vec![1.0; r]] {
        return Err("rank deficiency or constraint differs from the constant null space".into());
    }
    Ok(())
}

/// Projector rows of a mesh of a random rectangle are convex weights.
pub fn check_projector_rows(width: f64, height: f64, edge: f64, seed: u64) -> Check {
    let w = Window::rectangle(0.0, 0.0, width, height).map_err(|e| e.to_string())?;
    let mesh = build_mesh(&w, &MeshSettings::new(edge)).map_err(|e| e.to_string())?;
    let pts = uniform_points(&mut rng(seed), 200, &w);
    let a = mesh.projector(&pts).map_err(|e| e.to_string())?;
    for (i, row) in a.outer_iterator().enumerate() {
        let s: f64 = row.iter().map(|(_, v)| *v).sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(format!("row {i} sums to {s}"));
        }
        if row.iter().any(|(_, v)| *v < -1e-14) {
            return Err(format!("row {i} has a negative weight"));
        }
        let back: (f64, f64) = row.iter().fold((0.0, 0.0), |acc, (j, v)| {
            (acc.0 + v * mesh.vertices[j].x, acc.1 + v * mesh.vertices[j].y)
        });
        if (back.0 - pts[i].x).abs() > 1e-9 || (back.1 - pts[i].y).abs() > 1e-9 {
            return Err(format!("row {i} does not reproduce its point"));
        }
    }
    Ok(())
}

/// Voronoi cells clipped to a holed window partition its area.
pub fn check_voronoi_mass(n: usize, seed: u64) -> Check {
    let w = holed_window(3.0, 2.0);
    let pts = uniform_points(&mut rng(seed), n, &w);
    let vw = voronoi_weights(&pts, &w).map_err(|e| e.to_string())?;
    let total: f64 = vw.areas.iter().sum();
    if (total - w.area()).abs() > 1e-9 * w.area() {
        return Err(format!("cells sum to {total}, window area {}", w.area()));
    }
    if vw.areas.iter().any(|a| *a < 0.0) {
        return Err("negative cell area".into());
    }
    Ok(())
}

/// Augmentation keeps one observed row per point and one dummy row per
/// point of the same mark.
pub fn check_augmentation_counts(counts: &[usize], seed: u64) -> Check {
    let w = holed_window(2.0, 2.0);
    let mut r = rng(seed);
    let groups: Vec<Vec<Point>> = counts.iter().map(|&n| uniform_points(&mut r, n, &w)).collect();
    let refs: Vec<&[Point]> = groups.iter().map(|g| g.as_slice()).collect();
    let pp = PointPattern::from_groups(&refs).map_err(|e| e.to_string())?;
    let d = augment(&pp, &w, Integration::Voronoi, &[Point::new(1.0, 1.0)]).map_err(|e| e.to_string())?;
    if d.len() != 2 * pp.len() {
        return Err(format!("{} rows for {} points", d.len(), pp.len()));
    }
    for (b, &n) in counts.iter().enumerate() {
        let obs = d.rows.iter().filter(|r| r.block == b && r.y == 1.0 && r.weight == 0.0).count();
        let dummy = d.rows.iter().filter(|r| r.block == b && r.y == 0.0).count();
        if obs != n || dummy != n {
            return Err(format!("mark {b}: {obs} observed and {dummy} dummy rows for {n} points"));
        }
        if (d.dummy_area(b) - w.area()).abs() > 1e-9 * w.area() {
            return Err(format!("mark {b}: dummy weights sum to {}", d.dummy_area(b)));
        }
    }
    Ok(())
}
