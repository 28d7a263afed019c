use std::collections::HashMap;

use spade::{DelaunayTriangulation, Point2, Triangulation};

use super::{Mesh, Point, Window};
use crate::error::{Error, Result};

/// Per-point Voronoi cell areas clipped to the window.
#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiWeights {
    pub areas: Vec<f64>,
    /// Indices of points nudged by 1e-9 km because they duplicated an earlier point.
    pub perturbed: Vec<usize>,
}

const TIE_SHIFT: f64 = 1e-9;

pub fn voronoi_weights(points: &[Point], window: &Window) -> Result<VoronoiWeights> {
    if points.is_empty() {
        return Err(Error::InvalidInput("voronoi weights need at least one point".into()));
    }
    let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
    let mut sites = Vec::with_capacity(points.len());
    let mut perturbed = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let count = seen.entry((p.x.to_bits(), p.y.to_bits())).or_insert(0);
        let mut q = *p;
        if *count > 0 {
            q.x += TIE_SHIFT * *count as f64;
            perturbed.push(i);
        }
        *count += 1;
        sites.push(q);
    }

    let (mut lo, mut hi) = window.bbox();
    for p in &sites {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    let pad = (hi.x - lo.x).max(hi.y - lo.y) + 1.0;
    let frame = vec![
        Point::new(lo.x - pad, lo.y - pad),
        Point::new(hi.x + pad, lo.y - pad),
        Point::new(hi.x + pad, hi.y + pad),
        Point::new(lo.x - pad, hi.y + pad),
    ];

    if sites.len() == 1 {
        return Ok(VoronoiWeights { areas: vec![window.intersection_area(&frame)], perturbed });
    }

    let input: Vec<Point2<f64>> = sites.iter().map(|p| Point2::new(p.x, p.y)).collect();
    let dt = DelaunayTriangulation::<Point2<f64>>::bulk_load_stable(input)
        .map_err(|e| Error::InvalidInput(format!("delaunay triangulation failed: {e:?}")))?;
    if dt.num_vertices() != sites.len() {
        return Err(Error::InvalidInput("coincident points remained after perturbation".into()));
    }

    let mut areas = vec![0.0; sites.len()];
    for v in dt.vertices() {
        let i = v.fix().index();
        let p = sites[i];
        let mut cell = frame.clone();
        for e in v.out_edges() {
            let q = sites[e.to().fix().index()];
            cell = clip_halfplane(&cell, p.midpoint(q), q.sub(p));
            if cell.is_empty() {
                break;
            }
        }
        areas[i] = window.intersection_area(&cell);
    }
    Ok(VoronoiWeights { areas, perturbed })
}

/// Keeps the part of a convex polygon where `(x - m) . normal <= 0`.
fn clip_halfplane(poly: &[Point], m: Point, normal: Point) -> Vec<Point> {
    let side = |p: Point| (p.x - m.x) * normal.x + (p.y - m.y) * normal.y;
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..n {
        let cur = poly[k];
        let prev = poly[(k + n - 1) % n];
        let (sc, sp) = (side(cur), side(prev));
        if sc <= 0.0 {
            if sp > 0.0 {
                out.push(prev.lerp(cur, sp / (sp - sc)));
            }
            out.push(cur);
        } else if sp <= 0.0 {
            out.push(prev.lerp(cur, sp / (sp - sc)));
        }
    }
    out
}

/// Area of each barycentric dual cell intersected with the window.
pub fn dual_mesh_weights(mesh: &Mesh, window: &Window) -> Vec<f64> {
    let mut w = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = mesh.triangle_points(t);
        let centroid = Point::new((p[0].x + p[1].x + p[2].x) / 3.0, (p[0].y + p[1].y + p[2].y) / 3.0);
        for k in 0..3 {
            let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
            let quad = [a, a.midpoint(b), centroid, a.midpoint(c)];
            w[tri[k]] += window.intersection_area(&quad);
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, MeshSettings};

    #[test]
    fn single_point_takes_window() {
        let w = voronoi_weights(&[Point::new(0.3, 0.6)], &Window::unit_square()).unwrap();
        assert!((w.areas[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair() {
        let w = voronoi_weights(&[Point::new(0.25, 0.5), Point::new(0.75, 0.5)], &Window::unit_square()).unwrap();
        assert!((w.areas[0] - 0.5).abs() < 1e-12);
        assert!((w.areas[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn collinear_points() {
        let pts: Vec<Point> = (0..4).map(|i| Point::new(0.125 + 0.25 * i as f64, 0.5)).collect();
        let w = voronoi_weights(&pts, &Window::unit_square()).unwrap();
        for a in w.areas {
            assert!((a - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicates_are_perturbed() {
        let pts = [Point::new(0.5, 0.5), Point::new(0.5, 0.5), Point::new(0.2, 0.2)];
        let w = voronoi_weights(&pts, &Window::unit_square()).unwrap();
        assert_eq!(w.perturbed, vec![1]);
        assert!((w.areas.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_rejected() {
        assert!(voronoi_weights(&[], &Window::unit_square()).is_err());
    }

    #[test]
    fn dual_weights_partition_window() {
        let w = Window::new(
            vec![
                Point::new(0.0, 0.0),
                Point::new(2.0, 0.0),
                Point::new(2.0, 1.0),
                Point::new(1.0, 1.0),
                Point::new(1.0, 2.0),
                Point::new(0.0, 2.0),
            ],
            vec![],
        )
        .unwrap();
        let mesh = build_mesh(&w, &MeshSettings::new(0.35)).unwrap();
        let dual = dual_mesh_weights(&mesh, &w);
        assert!((dual.iter().sum::<f64>() - w.area()).abs() < 1e-9);
    }
}
