//! Planar geometry in kilometre coordinates: study windows, typed point
//! patterns, meshing, finite-element matrices, projectors and Voronoi
//! integration weights.

mod fem;
pub mod io;
mod mesh;
mod voronoi;

pub(crate) use fem::fem_matrices_1d;
pub use fem::{fem_matrices, FemMatrices};
pub use mesh::{build_mesh, Mesh, MeshSettings};
pub use voronoi::{dual_mesh_weights, voronoi_weights, VoronoiWeights};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(self.x + t * (other.x - self.x), self.y + t * (other.y - self.y))
    }

    pub fn midpoint(self, other: Point) -> Point {
        self.lerp(other, 0.5)
    }
}

pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Twice the signed area of triangle `abc` (positive when counter-clockwise).
pub(crate) fn orient(a: Point, b: Point, c: Point) -> f64 {
    cross(b.sub(a), c.sub(a))
}

/// Signed shoelace area; positive for counter-clockwise rings.
pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

/// Even-odd ray casting test.
pub fn ring_contains(ring: &[Point], p: Point) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub(crate) fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.x * ab.x + ab.y * ab.y;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2).clamp(0.0, 1.0);
    p.dist(a.lerp(b, t))
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    let on = |p: Point, q: Point, r: Point, o: f64| {
        o == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(a, b, c, o1) || on(a, b, d, o2) || on(c, d, a, o3) || on(c, d, b, o4)
}

fn ring_self_intersects(ring: &[Point]) -> bool {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            // adjacent edges share an endpoint
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

/// Sutherland-Hodgman clip of an arbitrary ring against a convex,
/// counter-clockwise polygon. The signed area of the result equals the
/// signed area of the intersection even when the subject is non-convex.
pub fn clip_to_convex(subject: &[Point], convex: &[Point]) -> Vec<Point> {
    let mut output: Vec<Point> = subject.to_vec();
    let m = convex.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let a = convex[i];
        let b = convex[(i + 1) % m];
        let input = std::mem::take(&mut output);
        let inside = |p: Point| orient(a, b, p) >= 0.0;
        let n = input.len();
        for k in 0..n {
            let cur = input[k];
            let prev = input[(k + n - 1) % n];
            let (ci, pi) = (inside(cur), inside(prev));
            if ci {
                if !pi {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if pi {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn line_intersection(p: Point, q: Point, a: Point, b: Point) -> Point {
    let r = q.sub(p);
    let s = b.sub(a);
    let denom = cross(r, s);
    if denom == 0.0 {
        return p;
    }
    let t = cross(a.sub(p), s) / denom;
    p.lerp(q, t)
}

fn normalize_ring(mut ring: Vec<Point>, what: &str) -> Result<Vec<Point>> {
    if ring.len() >= 2 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(Error::InvalidWindow(format!(
            "{what} ring has {} distinct vertices, need at least 3",
            ring.len()
        )));
    }
    if ring.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::InvalidWindow(format!("{what} ring has non-finite coordinates")));
    }
    let a = signed_area(&ring);
    if a.abs() < 1e-12 {
        return Err(Error::InvalidWindow(format!("degenerate window: {what} ring has zero area")));
    }
    if a < 0.0 {
        ring.reverse();
    }
    if ring_self_intersects(&ring) {
        return Err(Error::InvalidWindow(format!("{what} ring is self-intersecting")));
    }
    Ok(ring)
}

/// Polygonal study window with optional holes. All rings are stored
/// counter-clockwise without a repeated closing vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    exterior: Vec<Point>,
    holes: Vec<Vec<Point>>,
}

impl Window {
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self> {
        let exterior = normalize_ring(exterior, "exterior")?;
        let mut normalized = Vec::with_capacity(holes.len());
        for (h, hole) in holes.into_iter().enumerate() {
            let hole = normalize_ring(hole, &format!("hole {h}"))?;
            for p in &hole {
                if !ring_contains(&exterior, *p) || ring_boundary_distance(&exterior, *p) < 1e-12 {
                    return Err(Error::InvalidWindow(format!(
                        "hole {h} is not strictly inside the exterior ring"
                    )));
                }
            }
            normalized.push(hole);
        }
        let w = Window { exterior, holes: normalized };
        if w.area() <= 0.0 {
            return Err(Error::InvalidWindow("degenerate window: zero area".into()));
        }
        Ok(w)
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Window::new(
            vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)],
            vec![],
        )
    }

    pub fn unit_square() -> Self {
        Window::rectangle(0.0, 0.0, 1.0, 1.0).expect("unit square is valid")
    }

    pub fn exterior(&self) -> &[Point] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.holes
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Point]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.exterior) - self.holes.iter().map(|h| signed_area(h)).sum::<f64>()
    }

    pub fn contains(&self, p: Point) -> bool {
        ring_contains(&self.exterior, p) && !self.holes.iter().any(|h| ring_contains(h, p))
    }

    /// `(min, max)` corners of the bounding box.
    pub fn bbox(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.exterior {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.exterior.iter().enumerate() {
            for b in &self.exterior[i + 1..] {
                d = d.max(a.dist(*b));
            }
        }
        d
    }

    /// Distance from `p` to the nearest window edge (exterior or hole).
    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.rings().map(|r| ring_boundary_distance(r, p)).fold(f64::INFINITY, f64::min)
    }

    /// Area of the intersection between the window and a convex
    /// counter-clockwise polygon.
    pub fn intersection_area(&self, convex: &[Point]) -> f64 {
        let outer = signed_area(&clip_to_convex(&self.exterior, convex));
        let holes: f64 = self.holes.iter().map(|h| signed_area(&clip_to_convex(h, convex))).sum();
        (outer - holes).max(0.0)
    }
}

fn ring_boundary_distance(ring: &[Point], p: Point) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| segment_distance(p, ring[i], ring[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// Typed event locations: mark `0` are controls, marks `1..=K` are the
/// case sets of `K` diseases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    pub points: Vec<Point>,
    pub marks: Vec<usize>,
    /// Per-point covariate vectors; empty when the pattern has no covariates.
    pub covariates: Vec<Vec<f64>>,
    pub covariate_names: Vec<String>,
    n_types: usize,
}

impl PointPattern {
    pub fn new(points: Vec<Point>, marks: Vec<usize>) -> Result<Self> {
        let n_types = marks.iter().max().map_or(1, |m| m + 1);
        Self::with_types(points, marks, n_types)
    }

    /// Pattern with an explicit number of types, allowing empty trailing types.
    pub fn with_types(points: Vec<Point>, marks: Vec<usize>, n_types: usize) -> Result<Self> {
        if points.len() != marks.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} marks",
                points.len(),
                marks.len()
            )));
        }
        if let Some(m) = marks.iter().find(|&&m| m >= n_types) {
            return Err(Error::InvalidInput(format!("mark {m} outside 0..{n_types}")));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidInput("non-finite point coordinates".into()));
        }
        Ok(PointPattern { points, marks, covariates: Vec::new(), covariate_names: Vec::new(), n_types })
    }

    /// Controls and a list of case sets, marked `0` and `1..` respectively.
    pub fn from_groups(groups: &[&[Point]]) -> Result<Self> {
        let mut points = Vec::new();
        let mut marks = Vec::new();
        for (m, g) in groups.iter().enumerate() {
            points.extend_from_slice(g);
            marks.extend(std::iter::repeat_n(m, g.len()));
        }
        Self::with_types(points, marks, groups.len().max(1))
    }

    pub fn with_covariates(mut self, names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != self.points.len() {
            return Err(Error::InvalidInput("covariate rows do not match points".into()));
        }
        if values.iter().any(|row| row.len() != names.len() || row.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("covariate rows must be finite and match the column names".into()));
        }
        self.covariate_names = names;
        self.covariates = values;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    pub fn count(&self, mark: usize) -> usize {
        self.marks.iter().filter(|&&m| m == mark).count()
    }

    /// Indices of the points carrying `mark`.
    pub fn indices_of(&self, mark: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.marks[i] == mark).collect()
    }

    pub fn points_of(&self, mark: usize) -> Vec<Point> {
        self.indices_of(mark).into_iter().map(|i| self.points[i]).collect()
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    /// Errors naming the first point outside the window.
    pub fn check_inside(&self, window: &Window) -> Result<()> {
        match self.points.iter().position(|p| !window.contains(*p)) {
            Some(i) => Err(Error::InvalidInput(format!(
                "point {i} at ({}, {}) lies outside the window",
                self.points[i].x, self.points[i].y
            ))),
            None => Ok(()),
        }
    }
}

/// Euclidean distances from each point to `source`.
pub fn distance_to_source(points: &[Point], source: Point) -> Vec<f64> {
    points.iter().map(|p| p.dist(source)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances() {
        assert_eq!(distance_to_source(&[Point::new(1.0, 1.0)], Point::new(1.0, 1.0)), vec![0.0]);
        assert_eq!(distance_to_source(&[Point::new(3.0, 4.0)], Point::new(0.0, 0.0)), vec![5.0]);
    }

    #[test]
    fn window_rejects_degenerate() {
        let line = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)];
        let err = Window::new(line, vec![]).unwrap_err();
        assert!(err.to_string().contains("zero area"));
    }

    #[test]
    fn window_rejects_bowtie() {
        let bowtie = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        assert!(Window::new(bowtie, vec![]).is_err());
    }

    #[test]
    fn window_orientation_and_holes() {
        let cw = vec![Point::new(0.0, 0.0), Point::new(0.0, 2.0), Point::new(2.0, 2.0), Point::new(2.0, 0.0)];
        let hole = vec![Point::new(0.5, 0.5), Point::new(1.0, 0.5), Point::new(1.0, 1.0), Point::new(0.5, 1.0)];
        let w = Window::new(cw, vec![hole]).unwrap();
        assert!((w.area() - 3.75).abs() < 1e-12);
        assert!(!w.contains(Point::new(0.75, 0.75)));
        assert!(w.contains(Point::new(1.5, 1.5)));
        let outside_hole = vec![Point::new(1.5, 1.5), Point::new(3.0, 1.5), Point::new(3.0, 3.0)];
        assert!(Window::new(w.exterior().to_vec(), vec![outside_hole]).is_err());
    }

    #[test]
    fn clipping_nonconvex_subject() {
        // L-shaped window of area 3 clipped by the unit square at the corner
        let l = vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
        ];
        let w = Window::new(l, vec![]).unwrap();
        assert!((w.area() - 3.0).abs() < 1e-12);
        let sq = [Point::new(0.5, 0.5), Point::new(1.5, 0.5), Point::new(1.5, 1.5), Point::new(0.5, 1.5)];
        assert!((w.intersection_area(&sq) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn pattern_groups() {
        let c = [Point::new(0.1, 0.1), Point::new(0.2, 0.2)];
        let d = [Point::new(0.3, 0.3)];
        let p = PointPattern::from_groups(&[&c, &d, &[]]).unwrap();
        assert_eq!(p.n_types(), 3);
        assert_eq!(p.count(0), 2);
        assert_eq!(p.count(2), 0);
        assert!(p.check_inside(&Window::unit_square()).is_ok());
    }
}
