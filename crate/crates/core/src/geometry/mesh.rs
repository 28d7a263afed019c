use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, Point2, Triangulation};
use sprs::{CsMat, TriMat};

use super::{orient, ring_contains, Point, Window};
use crate::error::{Error, Result};

/// Meshing controls. `outer_extension = None` means 20% of the window diameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSettings {
    pub max_edge_inner: f64,
    pub outer_extension: Option<f64>,
    /// Outer edge length as a multiple of `max_edge_inner`.
    pub outer_factor: f64,
}

impl MeshSettings {
    pub fn new(max_edge_inner: f64) -> Self {
        MeshSettings { max_edge_inner, outer_extension: None, outer_factor: 2.0 }
    }

    pub fn with_extension(mut self, extension: f64) -> Self {
        self.outer_extension = Some(extension);
        self
    }
}

impl Default for MeshSettings {
    fn default() -> Self {
        MeshSettings::new(0.5)
    }
}

/// Triangulation carrying the piecewise-linear basis of the SPDE fields.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
    locator: Locator,
}

const REFINE_ROUNDS: usize = 40;

/// Triangulates the window plus an outer buffer. Triangles overlapping the
/// window have all edges no longer than `max_edge_inner`.
pub fn build_mesh(window: &Window, settings: &MeshSettings) -> Result<Mesh> {
    let h = settings.max_edge_inner;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("max_edge_inner must be positive, got {h}")));
    }
    let ext = settings.outer_extension.unwrap_or(0.2 * window.diameter());
    if !(ext >= 0.0 && ext.is_finite()) {
        return Err(Error::InvalidInput(format!("outer_extension must be non-negative, got {ext}")));
    }
    if window.area() <= 0.0 {
        return Err(Error::InvalidWindow("degenerate window: zero area".into()));
    }

    let mut points = PointSet::new();
    let spacing = 0.8 * h;
    for ring in window.rings() {
        sample_ring(ring, spacing, &mut points);
    }
    let (lo, hi) = window.bbox();
    for p in triangular_lattice(lo, hi, spacing) {
        if ring_contains(window.exterior(), p) && window.boundary_distance(p) >= 0.35 * spacing {
            points.insert(p);
        }
    }

    if ext > 0.0 {
        let outer_spacing = settings.outer_factor.max(1.0) * h;
        let hull = buffered_hull(window.exterior(), ext);
        sample_ring(&hull, outer_spacing, &mut points);
        let (olo, ohi) = ring_bbox(&hull);
        for p in triangular_lattice(olo, ohi, outer_spacing) {
            if !convex_contains(&hull, p) || ring_distance(&hull, p) < 0.35 * outer_spacing {
                continue;
            }
            if ring_contains(window.exterior(), p) || window.boundary_distance(p) < 0.6 * outer_spacing {
                continue;
            }
            points.insert(p);
        }
    }

    for _ in 0..REFINE_ROUNDS {
        let (vertices, triangles) = triangulate(&points.points)?;
        let mut added = false;
        for t in &triangles {
            let tri = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
            if !overlaps_window(window, &tri) {
                continue;
            }
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                if a.dist(b) > h {
                    added |= points.insert(a.midpoint(b));
                }
            }
        }
        if !added {
            return Mesh::from_parts(vertices, triangles);
        }
    }
    Err(Error::InvalidMesh(format!(
        "edge refinement did not reach max_edge_inner = {h} within {REFINE_ROUNDS} rounds"
    )))
}

fn overlaps_window(window: &Window, tri: &[Point; 3]) -> bool {
    let c = Point::new((tri[0].x + tri[1].x + tri[2].x) / 3.0, (tri[0].y + tri[1].y + tri[2].y) / 3.0);
    window.contains(c) || tri.iter().any(|&p| window.contains(p) && window.boundary_distance(p) > 1e-9)
}

fn triangulate(points: &[Point]) -> Result<(Vec<Point>, Vec<[usize; 3]>)> {
    let input: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p.x, p.y)).collect();
    let dt = DelaunayTriangulation::<Point2<f64>>::bulk_load_stable(input)
        .map_err(|e| Error::InvalidMesh(format!("triangulation failed: {e:?}")))?;
    if dt.num_vertices() != points.len() {
        return Err(Error::InvalidMesh("duplicate vertices survived deduplication".into()));
    }
    let vertices: Vec<Point> = dt.vertices().map(|v| Point::new(v.position().x, v.position().y)).collect();
    let triangles: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| {
            let [a, b, c] = f.vertices();
            [a.fix().index(), b.fix().index(), c.fix().index()]
        })
        .collect();
    if triangles.is_empty() {
        return Err(Error::InvalidMesh("all mesh points are collinear".into()));
    }
    Ok((vertices, triangles))
}

/// Insertion-ordered point set that drops points within 1e-9 of an existing one.
struct PointSet {
    points: Vec<Point>,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

const DEDUP_TOL: f64 = 1e-9;

impl PointSet {
    fn new() -> Self {
        PointSet { points: Vec::new(), buckets: HashMap::new() }
    }

    fn key(p: Point) -> (i64, i64) {
        ((p.x / 1e-6).floor() as i64, (p.y / 1e-6).floor() as i64)
    }

    fn insert(&mut self, p: Point) -> bool {
        let (kx, ky) = Self::key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.buckets.get(&(kx + dx, ky + dy)) {
                    if ids.iter().any(|&i| self.points[i].dist(p) <= DEDUP_TOL) {
                        return false;
                    }
                }
            }
        }
        self.buckets.entry((kx, ky)).or_default().push(self.points.len());
        self.points.push(p);
        true
    }
}

fn sample_ring(ring: &[Point], spacing: f64, out: &mut PointSet) {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        let pieces = (a.dist(b) / spacing).ceil().max(1.0) as usize;
        for k in 0..pieces {
            out.insert(a.lerp(b, k as f64 / pieces as f64));
        }
    }
}

fn triangular_lattice(lo: Point, hi: Point, spacing: f64) -> Vec<Point> {
    let dy = spacing * 3f64.sqrt() / 2.0;
    let ny = ((hi.y - lo.y) / dy).ceil() as usize + 1;
    let nx = ((hi.x - lo.x) / spacing).ceil() as usize + 2;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = lo.y + j as f64 * dy;
        let shift = if j % 2 == 1 { 0.5 * spacing } else { 0.0 };
        for i in 0..nx {
            out.push(Point::new(lo.x + shift + i as f64 * spacing, y));
        }
    }
    out
}

fn ring_bbox(ring: &[Point]) -> (Point, Point) {
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in ring {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

fn ring_distance(ring: &[Point], p: Point) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| super::segment_distance(p, ring[i], ring[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

fn convex_contains(hull: &[Point], p: Point) -> bool {
    let n = hull.len();
    (0..n).all(|i| orient(hull[i], hull[(i + 1) % n], p) >= 0.0)
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub(crate) fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && orient(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && orient(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn buffered_hull(ring: &[Point], ext: f64) -> Vec<Point> {
    const DIRECTIONS: usize = 32;
    let hull = convex_hull(ring);
    let mut pts = Vec::with_capacity(hull.len() * DIRECTIONS);
    for p in &hull {
        for k in 0..DIRECTIONS {
            let a = 2.0 * std::f64::consts::PI * k as f64 / DIRECTIONS as f64;
            pts.push(Point::new(p.x + ext * a.cos(), p.y + ext * a.sin()));
        }
    }
    convex_hull(&pts)
}

impl Mesh {
    /// Builds a mesh from explicit vertices and triangles, reorienting
    /// triangles counter-clockwise and flagging vertices on boundary edges.
    pub fn from_parts(vertices: Vec<Point>, mut triangles: Vec<[usize; 3]>) -> Result<Mesh> {
        let nv = vertices.len();
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in triangles.iter_mut() {
            if t.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t:?} references a missing vertex")));
            }
            if orient(vertices[t[0]], vertices[t[1]], vertices[t[2]]) < 0.0 {
                t.swap(1, 2);
            }
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut boundary = vec![false; nv];
        for (&(a, b), &c) in &edge_count {
            if c == 1 {
                boundary[a] = true;
                boundary[b] = true;
            }
        }
        let locator = Locator::new(&vertices, &triangles);
        Ok(Mesh { vertices, triangles, boundary, locator })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * orient(a, b, c)
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Containing triangle and barycentric weights of `p`.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in self.locator.candidates(p) {
            let [a, b, c] = self.triangle_points(t);
            let area2 = orient(a, b, c);
            let w = [orient(p, b, c) / area2, orient(a, p, c) / area2, orient(a, b, p) / area2];
            let min = w[0].min(w[1]).min(w[2]);
            if min >= -1e-10 && best.as_ref().is_none_or(|(_, _, m)| min > *m) {
                best = Some((t, w, min));
                if min >= 0.0 {
                    break;
                }
            }
        }
        best.map(|(t, mut w, _)| {
            for x in w.iter_mut() {
                *x = x.max(0.0);
            }
            let s: f64 = w.iter().sum();
            (t, [w[0] / s, w[1] / s, w[2] / s])
        })
    }

    /// Sparse `n_points x n_vertices` matrix of barycentric weights.
    pub fn projector(&self, points: &[Point]) -> Result<CsMat<f64>> {
        let mut tri = TriMat::with_capacity((points.len(), self.n_vertices()), 3 * points.len());
        for (i, &p) in points.iter().enumerate() {
            let (t, w) = self.locate(p).ok_or(Error::PointOutsideMesh { index: i, x: p.x, y: p.y })?;
            for (k, &v) in self.triangles[t].iter().enumerate() {
                if w[k] > 0.0 {
                    tri.add_triplet(i, v, w[k]);
                }
            }
        }
        Ok(tri.to_csr())
    }

    /// Projector entries for a single point.
    pub fn project_point(&self, p: Point) -> Option<[(usize, f64); 3]> {
        self.locate(p).map(|(t, w)| {
            let v = self.triangles[t];
            [(v[0], w[0]), (v[1], w[1]), (v[2], w[2])]
        })
    }

    pub fn max_edge(&self) -> f64 {
        (0..self.triangles.len())
            .flat_map(|t| {
                let p = self.triangle_points(t);
                [p[0].dist(p[1]), p[1].dist(p[2]), p[2].dist(p[0])]
            })
            .fold(0.0, f64::max)
    }
}

/// Uniform bucket grid over triangle bounding boxes.
#[derive(Debug, Clone)]
struct Locator {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn new(vertices: &[Point], triangles: &[[usize; 3]]) -> Self {
        let (lo, hi) = ring_bbox(vertices);
        let side = (hi.x - lo.x).max(hi.y - lo.y).max(1e-12);
        let per_side = ((triangles.len() as f64).sqrt().ceil() as usize).clamp(1, 512);
        let cell = side / per_side as f64 * (1.0 + 1e-9);
        let nx = (((hi.x - lo.x) / cell).floor() as usize + 1).max(1);
        let ny = (((hi.y - lo.y) / cell).floor() as usize + 1).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, tri) in triangles.iter().enumerate() {
            let pts = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
            let (tlo, thi) = ring_bbox(&pts);
            let (i0, j0) = Self::index(lo, cell, nx, ny, Point::new(tlo.x - 1e-9, tlo.y - 1e-9));
            let (i1, j1) = Self::index(lo, cell, nx, ny, Point::new(thi.x + 1e-9, thi.y + 1e-9));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        Locator { origin: lo, cell, nx, ny, buckets }
    }

    fn index(origin: Point, cell: f64, nx: usize, ny: usize, p: Point) -> (usize, usize) {
        let i = ((p.x - origin.x) / cell).floor().clamp(0.0, (nx - 1) as f64) as usize;
        let j = ((p.y - origin.y) / cell).floor().clamp(0.0, (ny - 1) as f64) as usize;
        (i, j)
    }

    fn candidates(&self, p: Point) -> &[usize] {
        let (i, j) = Self::index(self.origin, self.cell, self.nx, self.ny, p);
        &self.buckets[j * self.nx + i]
    }
}
