//! Kernel intensity surfaces and case/control risk ratios on regular grids.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cross, Point, Window};

/// Regular grid; cell `(ix, iy)` has its lower-left corner at
/// `origin + (ix, iy) * cell`. Cells are stored row-major with `ix` fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Point,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(origin: Point, cell: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(cell > 0.0 && cell.is_finite()) || nx == 0 || ny == 0 {
            return Err(Error::InvalidInput(format!("invalid grid: cell {cell}, {nx} x {ny}")));
        }
        Ok(GridSpec { origin, cell, nx, ny })
    }

    /// Grid over the window bounding box with `res` cells along its longer side.
    pub fn covering(window: &Window, res: usize) -> Result<Self> {
        if res == 0 {
            return Err(Error::InvalidInput("grid resolution must be positive".into()));
        }
        let (lo, hi) = window.bbox();
        let cell = (hi.x - lo.x).max(hi.y - lo.y) / res as f64;
        let nx = ((hi.x - lo.x) / cell - 1e-9).ceil().max(1.0) as usize;
        let ny = ((hi.y - lo.y) / cell - 1e-9).ceil().max(1.0) as usize;
        GridSpec::new(lo, cell, nx, ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, k: usize) -> Point {
        let (ix, iy) = (k % self.nx, k / self.nx);
        Point::new(self.origin.x + (ix as f64 + 0.5) * self.cell, self.origin.y + (iy as f64 + 0.5) * self.cell)
    }

    pub fn centers(&self) -> Vec<Point> {
        (0..self.len()).map(|k| self.center(k)).collect()
    }

    pub fn cell_area(&self) -> f64 {
        self.cell * self.cell
    }

    /// Index of the cell containing `p`, if any.
    pub fn cell_of(&self, p: Point) -> Option<usize> {
        let fx = (p.x - self.origin.x) / self.cell;
        let fy = (p.y - self.origin.y) / self.cell;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        (ix < self.nx && iy < self.ny).then_some(iy * self.nx + ix)
    }
}

/// Values on a [`GridSpec`]. `mask` marks cells whose centre lies in the
/// window; `undefined` marks masked cells with no usable value. Cells
/// outside the mask or undefined hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub undefined: Vec<bool>,
    pub warning: Option<String>,
}

impl GridField {
    /// Evaluates `f` at the centre of every cell inside the window.
    pub fn from_fn<F>(spec: GridSpec, window: &Window, f: F) -> Self
    where
        F: Fn(Point) -> f64 + Sync,
    {
        let mask: Vec<bool> = (0..spec.len()).map(|k| window.contains(spec.center(k))).collect();
        let values = (0..spec.len())
            .into_par_iter()
            .map(|k| if mask[k] { f(spec.center(k)) } else { f64::NAN })
            .collect();
        GridField { spec, values, mask, undefined: vec![false; spec.len()], warning: None }
    }

    pub fn is_defined(&self, k: usize) -> bool {
        self.mask[k] && !self.undefined[k]
    }

    /// Values of defined cells, in cell order.
    pub fn defined_values(&self) -> Vec<f64> {
        (0..self.values.len()).filter(|&k| self.is_defined(k)).map(|k| self.values[k]).collect()
    }

    /// Riemann sum over defined cells.
    pub fn integral(&self) -> f64 {
        self.defined_values().iter().sum::<f64>() * self.spec.cell_area()
    }

    pub fn max(&self) -> f64 {
        self.defined_values().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value of the cell containing `p` (NaN outside the grid or mask).
    pub fn value_at(&self, p: Point) -> f64 {
        match self.spec.cell_of(p) {
            Some(k) if self.is_defined(k) => self.values[k],
            _ => f64::NAN,
        }
    }

    /// CSV with columns `x,y,value` for masked cells; undefined cells as `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,value\n");
        for k in 0..self.values.len() {
            if !self.mask[k] {
                continue;
            }
            let c = self.spec.center(k);
            if self.undefined[k] {
                let _ = writeln!(out, "{},{},NA", c.x, c.y);
            } else {
                let _ = writeln!(out, "{},{},{}", c.x, c.y, self.values[k]);
            }
        }
        out
    }

    /// ESRI ASCII grid, top row first, nodata -9999.
    pub fn to_ascii_grid(&self) -> String {
        let s = &self.spec;
        let mut out = format!(
            "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value -9999\n",
            s.nx, s.ny, s.origin.x, s.origin.y, s.cell
        );
        for iy in (0..s.ny).rev() {
            let row: Vec<String> = (0..s.nx)
                .map(|ix| {
                    let k = iy * s.nx + ix;
                    if self.is_defined(k) {
                        format!("{}", self.values[k])
                    } else {
                        "-9999".to_string()
                    }
                })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
    }

    pub fn write_ascii_grid(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ascii_grid()).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
    }
}

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];
/// Angular width of one quadrature panel.
const PANEL_WIDTH: f64 = PI / 48.0;
const CUTOFF: f64 = 5.0;

/// Mass of the isotropic Gaussian kernel centred at `x` that falls inside
/// the window. Each ring edge contributes the signed angular integral of
/// `1 - exp(-r(phi)^2 / 2h^2)` over the triangle it spans with `x`.
pub fn kernel_mass_inside(window: &Window, x: Point, bandwidth: f64) -> f64 {
    if window.contains(x) && window.boundary_distance(x) > 8.0 * bandwidth {
        return 1.0;
    }
    let mut total = 0.0;
    for (r, ring) in window.rings().enumerate() {
        let sign = if r == 0 { 1.0 } else { -1.0 };
        let n = ring.len();
        for i in 0..n {
            total += sign * edge_mass(ring[i].sub(x), ring[(i + 1) % n].sub(x), bandwidth);
        }
    }
    total.clamp(0.0, 1.0)
}

fn edge_mass(a: Point, b: Point, h: f64) -> f64 {
    let d = b.sub(a);
    let num = cross(a, d);
    if num.abs() < 1e-300 {
        return 0.0;
    }
    let delta = cross(a, b).atan2(a.x * b.x + a.y * b.y);
    let theta_a = a.y.atan2(a.x);
    let inv2h2 = 1.0 / (2.0 * h * h);
    let panels = (delta.abs() / PANEL_WIDTH).ceil().max(1.0) as usize;
    let width = delta / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let mid = theta_a + (p as f64 + 0.5) * width;
        for &(node, w) in &GL8 {
            let phi = mid + 0.5 * width * node;
            let u = Point::new(phi.cos(), phi.sin());
            let r = num / cross(u, d);
            s += w * (1.0 - (-r * r * inv2h2).exp());
        }
    }
    s * 0.5 * width / (2.0 * PI)
}

/// Gaussian kernel intensity estimate with edge correction by the kernel
/// mass inside the window at each evaluation point.
pub fn kernel_intensity(points: &[Point], bandwidth: f64, spec: GridSpec, window: &Window) -> Result<GridField> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let mut sorted: Vec<Point> = points.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let reach = CUTOFF * bandwidth;
    let norm = 1.0 / (2.0 * PI * bandwidth * bandwidth);
    let inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    let mut field = GridField::from_fn(spec, window, |x| {
        if sorted.is_empty() {
            return 0.0;
        }
        let lo = sorted.partition_point(|p| p.x < x.x - reach);
        let hi = sorted.partition_point(|p| p.x <= x.x + reach);
        let mut s = 0.0;
        for p in &sorted[lo..hi] {
            let (dx, dy) = (p.x - x.x, p.y - x.y);
            let r2 = dx * dx + dy * dy;
            if r2 <= reach * reach {
                s += (-r2 * inv2h2).exp();
            }
        }
        if s == 0.0 {
            return 0.0;
        }
        let e = kernel_mass_inside(window, x, bandwidth);
        norm * s / e.max(1e-12)
    });
    if points.is_empty() {
        field.warning = Some("empty pattern: intensity is identically zero".into());
    }
    Ok(field)
}

/// Ratio of case to control kernel intensities with a shared bandwidth.
/// Cells where the control intensity is below `1e-10 n_0 / |W|` are undefined.
pub fn risk_ratio(
    cases: &[Point],
    controls: &[Point],
    bandwidth: f64,
    spec: GridSpec,
    window: &Window,
) -> Result<GridField> {
    if cases.is_empty() || controls.is_empty() {
        return Err(Error::InvalidInput("risk ratio needs nonempty case and control patterns".into()));
    }
    let num = kernel_intensity(cases, bandwidth, spec, window)?;
    let den = kernel_intensity(controls, bandwidth, spec, window)?;
    let eps = 1e-10 * controls.len() as f64 / window.area();
    let mut out = num.clone();
    let mut n_undefined = 0;
    for k in 0..spec.len() {
        if !out.mask[k] {
            continue;
        }
        if den.values[k] < eps {
            out.undefined[k] = true;
            out.values[k] = f64::NAN;
            n_undefined += 1;
        } else {
            out.values[k] = num.values[k] / den.values[k];
        }
    }
    if n_undefined > 0 {
        out.warning = Some(format!("{n_undefined} cells undefined (control intensity below {eps:e})"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_mass_square() {
        let w = Window::rectangle(0.0, 0.0, 10.0, 10.0).unwrap();
        let h = 0.5;
        assert!((kernel_mass_inside(&w, Point::new(5.0, 5.0), h) - 1.0).abs() < 1e-12);
        // on an edge half the mass is inside, at a corner a quarter
        assert!((kernel_mass_inside(&w, Point::new(5.0, 0.0), h) - 0.5).abs() < 1e-9);
        assert!((kernel_mass_inside(&w, Point::new(0.0, 0.0), h) - 0.25).abs() < 1e-9);
        // product of normal cdfs near a corner
        let phi = |z: f64| 0.5 * (1.0 + statrs::function::erf::erf(z / 2f64.sqrt()));
        let p = Point::new(0.3, 0.6);
        let expect = phi(0.3 / h) * phi(0.6 / h);
        let got = kernel_mass_inside(&w, p, h);
    assert!((got - expect).abs() < 1e-8, "{got} vs {expect}");
    }

    #[test]
    fn kernel_mass_hole() {
        let w = Window::new(
            vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(10.0, 10.0), Point::new(0.0, 10.0)],
            vec![vec![Point::new(4.0, 4.0), Point::new(6.0, 4.0), Point::new(6.0, 6.0), Point::new(4.0, 6.0)]],
        )
        .unwrap();
        let h = 0.4;
        let phi = |z: f64| 0.5 * (1.0 + statrs::function::erf::erf(z / 2f64.sqrt()));
        let p = Point::new(3.5, 5.0);
        let inside_hole = (phi((4.0 - 3.5) / h) - phi((6.0 - 3.5) / h)).abs() * (phi(1.0 / h) - phi(-1.0 / h));
        assert!((kernel_mass_inside(&w, p, h) - (1.0 - inside_hole)).abs() < 1e-8);
    }

    #[test]
    fn empty_pattern_zero_field() {
        let w = Window::unit_square();
        let spec = GridSpec::covering(&w, 10).unwrap();
        let f = kernel_intensity(&[], 0.1, spec, &w).unwrap();
        assert!(f.defined_values().iter().all(|&v| v == 0.0));
        assert!(f.warning.is_some());
    }

    #[test]
    fn single_point_symmetry() {
        let w = Window::unit_square();
        let spec = GridSpec::covering(&w, 20).unwrap();
        let f = kernel_intensity(&[Point::new(0.5, 0.5)], 0.15, spec, &w).unwrap();
        for iy in 0..20 {
            for ix in 0..20 {
                let a = f.values[iy * 20 + ix];
                assert!((a - f.values[iy * 20 + (19 - ix)]).abs() < 1e-8);
                assert!((a - f.values[(19 - iy) * 20 + ix]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn identical_patterns_ratio_one() {
        let w = Window::unit_square();
        let pts: Vec<Point> = (0..30).map(|i| Point::new((i as f64 * 0.37) % 1.0, (i as f64 * 0.61) % 1.0)).collect();
        let spec = GridSpec::covering(&w, 15).unwrap();
        let rr = risk_ratio(&pts, &pts, 0.2, spec, &w).unwrap();
        assert!(rr.defined_values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn grid_exports() {
        let w = Window::rectangle(0.0, 0.0, 2.0, 1.0).unwrap();
        let spec = GridSpec::covering(&w, 4).unwrap();
        assert_eq!((spec.nx, spec.ny), (4, 2));
        let f = GridField::from_fn(spec, &w, |p| p.x);
        let csv = f.to_csv();
        assert_eq!(csv.lines().count(), 9);
        assert!(csv.starts_with("x,y,value\n0.25,0.25,0.25\n"));
        let asc = f.to_ascii_grid();
        assert!(asc.contains("ncols 4\nnrows 2\n"));
        assert_eq!(asc.lines().last().unwrap(), "0.25 0.75 1.25 1.75");
        assert_eq!(spec.cell_of(Point::new(1.9, 0.9)), Some(7));
        assert_eq!(spec.cell_of(Point::new(2.1, 0.9)), None);
    }

    #[test]
    fn bad_bandwidth() {
        let w = Window::unit_square();
        let spec = GridSpec::covering(&w, 4).unwrap();
        assert!(kernel_intensity(&[Point::new(0.5, 0.5)], 0.0, spec, &w).is_err());
    }
}
