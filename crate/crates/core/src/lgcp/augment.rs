use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dual_mesh_weights, voronoi_weights, Mesh, Point, PointPattern, Window};

/// One Poisson pseudo-observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedRow {
    pub y: f64,
    pub weight: f64,
    pub location: Point,
    /// Likelihood block: 0 for controls, `i` for disease `i`.
    pub block: usize,
    pub covariates: Vec<f64>,
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedData {
    pub rows: Vec<AugmentedRow>,
    pub n_blocks: usize,
    pub covariate_names: Vec<String>,
    pub window_area: f64,
    /// Points nudged to break exact ties in the tessellation, as pattern indices.
    pub perturbed: Vec<usize>,
}

/// Integration scheme for the augmentation.
#[derive(Debug, Clone, Copy)]
pub enum Integration<'a> {
    Voronoi,
    DualMesh(&'a Mesh),
}

/// Rewrites each mark of `pattern` as observed rows `(1, 0)` and dummy
/// rows `(0, area)`. Distances to `sources` are stored per row.
pub fn augment(pattern: &PointPattern, window: &Window, integration: Integration<'_>, sources: &[Point]) -> Result<AugmentedData> {
    pattern.check_inside(window)?;
    let n_blocks = pattern.n_types();
    let covariate_of = |i: usize| -> Vec<f64> { pattern.covariates.get(i).cloned().unwrap_or_default() };
    let row = |y: f64, weight: f64, location: Point, block: usize, covariates: Vec<f64>| AugmentedRow {
        y,
        weight,
        location,
        block,
        covariates,
        distances: sources.iter().map(|s| location.dist(*s)).collect(),
    };
    let dual = match integration {
        Integration::DualMesh(mesh) => Some((mesh, dual_mesh_weights(mesh, window))),
        Integration::Voronoi => None,
    };
    let mut rows = Vec::new();
    let mut perturbed = Vec::new();
    for block in 0..n_blocks {
        let idx = pattern.indices_of(block);
        if idx.is_empty() {
            return Err(Error::InvalidInput(format!("mark {block} has no points; every type needs at least one")));
        }
        for &i in &idx {
            rows.push(row(1.0, 0.0, pattern.points[i], block, covariate_of(i)));
        }
        match &dual {
            None => {
                let pts: Vec<Point> = idx.iter().map(|&i| pattern.points[i]).collect();
                let vw = voronoi_weights(&pts, window)?;
                perturbed.extend(vw.perturbed.iter().map(|&k| idx[k]));
                for (&i, &a) in idx.iter().zip(&vw.areas) {
                    rows.push(row(0.0, a, pattern.points[i], block, covariate_of(i)));
                }
            }
            Some((mesh, weights)) => {
                for (v, &a) in weights.iter().enumerate() {
                    if a > 0.0 {
                        let at = mesh.vertices[v];
                        rows.push(row(0.0, a, at, block, covariate_of(nearest(&pattern.points, at))));
                    }
                }
            }
        }
    }
    perturbed.sort_unstable();
    perturbed.dedup();
    Ok(AugmentedData {
        rows,
        n_blocks,
        covariate_names: pattern.covariate_names.clone(),
        window_area: window.area(),
        perturbed,
    })
}

fn nearest(points: &[Point], at: Point) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, p) in points.iter().enumerate() {
        let d = p.dist(at);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

impl AugmentedData {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn observed(&self, block: usize) -> usize {
        self.rows.iter().filter(|r| r.block == block && r.y > 0.0).count()
    }

    pub fn dummy_area(&self, block: usize) -> f64 {
        self.rows.iter().filter(|r| r.block == block && r.y == 0.0).map(|r| r.weight).sum()
    }

    pub fn max_distance(&self, source: usize) -> f64 {
        self.rows.iter().map(|r| r.distances[source]).fold(0.0, f64::max)
    }

    /// Rows as CSV: `block,y,weight,x,y_coord`, then distances and covariates.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("block,y,weight,x,y_coord");
        let n_dist = self.rows.first().map_or(0, |r| r.distances.len());
        for j in 0..n_dist {
            let _ = write!(out, ",d{j}");
        }
        for n in &self.covariate_names {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{},{}", r.block, r.y, r.weight, r.location.x, r.location.y);
            for v in r.distances.iter().chain(&r.covariates) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}
