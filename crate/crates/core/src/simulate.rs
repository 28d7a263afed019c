//! Inhomogeneous Poisson simulation by thinning, and the exposure study.
//!
//! Controls are drawn from a baseline intensity, the baseline is
//! re-estimated by kernel smoothing of those controls, and each case set is
//! drawn from `lambda0_hat(x) * exp(-d(x) / phi)` with `d` the distance to
//! the source.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointPattern, Window};
use crate::smoothing::{kernel_intensity, GridField, GridSpec};

/// Candidates drawn without a single acceptance before fixed-n mode gives up.
const MAX_BARREN_CANDIDATES: usize = 10_000_000;

pub enum Intensity<'a> {
    /// Piecewise constant on grid cells. Window points in unmasked cells
    /// take the value of the nearest defined neighbour.
    Grid(&'a GridField),
    /// Pointwise function with a known upper bound over the window.
    Function { f: &'a (dyn Fn(Point) -> f64 + Sync), bound: f64 },
}

impl Intensity<'_> {
    pub fn eval(&self, p: Point) -> f64 {
        match self {
            Intensity::Grid(g) => grid_lookup(g, p),
            Intensity::Function { f, .. } => f(p),
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            Intensity::Grid(g) => g.max().max(0.0),
            Intensity::Function { bound, .. } => *bound,
        }
    }
}

fn grid_lookup(g: &GridField, p: Point) -> f64 {
    let s = &g.spec;
    let fx = ((p.x - s.origin.x) / s.cell).floor();
    let fy = ((p.y - s.origin.y) / s.cell).floor();
    let mut best = (f64::INFINITY, 0.0);
    for dy in -1..=1 {
        for dx in -1..=1 {
            let (ix, iy) = (fx + dx as f64, fy + dy as f64);
            if ix < 0.0 || iy < 0.0 || ix >= s.nx as f64 || iy >= s.ny as f64 {
                continue;
            }
            let k = iy as usize * s.nx + ix as usize;
            if !g.is_defined(k) {
                continue;
            }
            let d = if dx == 0 && dy == 0 { -1.0 } else { s.center(k).dist(p) };
            if d < best.0 {
                best = (d, g.values[k]);
            }
        }
    }
    best.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Poisson number of points with mean the integrated intensity.
    Rate,
    /// Exactly `n` points, independent with density proportional to the intensity.
    Fixed(usize),
}

/// Lewis-Shedler thinning with a stream seeded from `seed`.
pub fn thin_poisson(intensity: &Intensity<'_>, window: &Window, mode: CountMode, seed: u64) -> Result<PointPattern> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = thin_with_rng(intensity, window, mode, &mut rng)?;
    let n = pts.len();
    PointPattern::new(pts, vec![0; n])
}

pub fn thin_with_rng<R: Rng>(intensity: &Intensity<'_>, window: &Window, mode: CountMode, rng: &mut R) -> Result<Vec<Point>> {
    let m = intensity.bound();
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::Simulation(format!("intensity bound must be finite and non-negative, got {m}")));
    }
    let (lo, hi) = window.bbox();
    let candidate = |rng: &mut R| -> Result<Option<Point>> {
        let p = Point::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        let u: f64 = rng.random();
        if !window.contains(p) {
            return Ok(None);
        }
        let v = intensity.eval(p);
        if !(v >= 0.0) || v > m * (1.0 + 1e-12) {
            return Err(Error::Simulation(format!("intensity {v} at ({}, {}) is outside [0, {m}]", p.x, p.y)));
        }
        Ok((u * m < v).then_some(p))
    };
    let mut out = Vec::new();
    match mode {
        CountMode::Rate => {
            let mean = m * (hi.x - lo.x) * (hi.y - lo.y);
            if mean == 0.0 {
                return Ok(out);
            }
            let n = Poisson::new(mean).map_err(|e| Error::Simulation(e.to_string()))?.sample(rng) as usize;
            for _ in 0..n {
                if let Some(p) = candidate(rng)? {
                    out.push(p);
                }
            }
        }
        CountMode::Fixed(n) => {
            if n > 0 && m == 0.0 {
                return Err(Error::Simulation("cannot draw a fixed number of points from a zero intensity".into()));
            }
            let mut barren = 0;
            while out.len() < n {
                match candidate(rng)? {
                    Some(p) => {
                        out.push(p);
                        barren = 0;
                    }
                    None => {
                        barren += 1;
                        if barren > MAX_BARREN_CANDIDATES {
                            return Err(Error::Simulation(
                                "no candidate accepted; the intensity is zero over the window".into(),
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exponential distance decay `exp(-d / phi)`.
pub fn modulation(d: f64, phi: f64) -> f64 {
    (-d / phi).exp()
}

/// Population-like density used when no fitted baseline is supplied:
/// a low background plus a few Gaussian towns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBaseline {
    pub background: f64,
    /// `(x, y, sd, height)` of each town.
    pub towns: Vec<(f64, f64, f64, f64)>,
}

impl Default for SyntheticBaseline {
    fn default() -> Self {
        SyntheticBaseline {
            background: 0.15,
            towns: vec![
                (1.1, 1.6, 0.45, 2.5),
                (3.6, 2.6, 0.7, 1.8),
                (2.1, 3.7, 0.4, 2.2),
                (4.7, 0.9, 0.5, 1.2),
            ],
        }
    }
}

impl SyntheticBaseline {
    pub fn eval(&self, p: Point) -> f64 {
        self.background
            + self
                .towns
                .iter()
                .map(|&(x, y, sd, h)| h * (-((p.x - x).powi(2) + (p.y - y).powi(2)) / (2.0 * sd * sd)).exp())
                .sum::<f64>()
    }

    pub fn bound(&self) -> f64 {
        self.background + self.towns.iter().map(|t| t.3.max(0.0)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    Synthetic(SyntheticBaseline),
    Uniform,
    Field(GridField),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_controls: usize,
    pub case_counts: Vec<usize>,
    pub phis: Vec<f64>,
    pub source: Point,
    pub seed: u64,
    pub window: Window,
    pub baseline: Baseline,
    /// Kernel bandwidth for re-estimating the baseline from the controls.
    pub bandwidth: f64,
    /// Cells along the longer side of the smoothing grid.
    pub grid_res: usize,
}

pub const STUDY_CASE_COUNTS: [usize; 6] = [50, 100, 300, 500, 1000, 2000];
pub const STUDY_PHIS: [f64; 3] = [1.0, 3.0, 6.0];
pub const SYNTHETIC_SOURCE: Point = Point::new(1.5, 1.2);

/// 5.5 x 4.5 km rectangle with a small square hole around the source, so
/// distances to the source span roughly [0.06, 5.2].
pub fn synthetic_window() -> Window {
    let (s, h) = (SYNTHETIC_SOURCE, 0.06);
    Window::new(
        vec![Point::new(0.0, 0.0), Point::new(5.5, 0.0), Point::new(5.5, 4.5), Point::new(0.0, 4.5)],
        vec![vec![
            Point::new(s.x - h, s.y - h),
            Point::new(s.x - h, s.y + h),
            Point::new(s.x + h, s.y + h),
            Point::new(s.x + h, s.y - h),
        ]],
    )
    .expect("synthetic window is valid")
}

impl Scenario {
    /// 3000 controls, all case counts and decay scales, synthetic window.
    pub fn full_study(seed: u64) -> Self {
        Scenario {
            n_controls: 3000,
            case_counts: STUDY_CASE_COUNTS.to_vec(),
            phis: STUDY_PHIS.to_vec(),
            source: SYNTHETIC_SOURCE,
            seed,
            window: synthetic_window(),
            baseline: Baseline::Synthetic(SyntheticBaseline::default()),
            bandwidth: 0.3,
            grid_res: 110,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_controls == 0 || self.case_counts.iter().any(|&n| n == 0) {
            return Err(Error::InvalidSpec("control and case counts must be positive".into()));
        }
        if self.phis.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidSpec("decay scales must be positive and finite".into()));
        }
        if !(self.bandwidth > 0.0) || self.grid_res == 0 {
            return Err(Error::InvalidSpec("bandwidth and grid resolution must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub n_cases: usize,
    pub phi: f64,
    pub cases: Vec<Point>,
}

impl Dataset {
    /// Controls as mark 0 and these cases as mark 1.
    pub fn pattern(&self, controls: &[Point]) -> Result<PointPattern> {
        PointPattern::from_groups(&[controls, &self.cases])
    }
}

#[derive(Debug, Clone)]
pub struct Study {
    pub controls: Vec<Point>,
    pub baseline_estimate: GridField,
    pub datasets: Vec<Dataset>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for one `(n, phi)` cell of the study; stream 0 is the controls.
pub fn stream(seed: u64, n: usize, phi: f64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix(n as u64 ^ phi.to_bits().rotate_left(17)) | 1);
    rng
}

pub fn simulate_study(scenario: &Scenario) -> Result<Study> {
    scenario.validate()?;
    let w = &scenario.window;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mode = CountMode::Fixed(scenario.n_controls);
    let controls = match &scenario.baseline {
        Baseline::Synthetic(b) => {
            let f = |p: Point| b.eval(p);
            thin_with_rng(&Intensity::Function { f: &f, bound: b.bound() }, w, mode, &mut rng)?
        }
        Baseline::Uniform => thin_with_rng(&Intensity::Function { f: &|_| 1.0, bound: 1.0 }, w, mode, &mut rng)?,
        Baseline::Field(g) => thin_with_rng(&Intensity::Grid(g), w, mode, &mut rng)?,
    };
    let spec = GridSpec::covering(w, scenario.grid_res)?;
    let lambda0 = kernel_intensity(&controls, scenario.bandwidth, spec, w)?;
    let cells: Vec<(usize, f64)> =
        scenario.phis.iter().flat_map(|&phi| scenario.case_counts.iter().map(move |&n| (n, phi))).collect();
    let datasets = cells
        .par_iter()
        .map(|&(n, phi)| {
            let f = |p: Point| grid_lookup(&lambda0, p) * modulation(p.dist(scenario.source), phi);
            let intensity = Intensity::Function { f: &f, bound: lambda0.max() };
            let mut rng = stream(scenario.seed, n, phi);
            let cases = thin_with_rng(&intensity, w, CountMode::Fixed(n), &mut rng)?;
            Ok(Dataset { n_cases: n, phi, cases })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Study { controls, baseline_estimate: lambda0, datasets })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_mode_mean() {
        let w = Window::unit_square();
        let f = |_: Point| 100.0;
        let it = Intensity::Function { f: &f, bound: 100.0 };
        let total: usize = (0..200).map(|s| thin_poisson(&it, &w, CountMode::Rate, s).unwrap().len()).sum();
        let mean = total as f64 / 200.0;
        // sd of the mean is 100^0.5 / 200^0.5
        assert!((mean - 100.0).abs() < 2.0, "{mean}");
    }

    #[test]
    fn zero_left_half() {
        let w = Window::unit_square();
        let f = |p: Point| if p.x < 0.5 { 0.0 } else { 50.0 };
        let it = Intensity::Function { f: &f, bound: 50.0 };
        for s in 0..20 {
            let pp = thin_poisson(&it, &w, CountMode::Fixed(40), s).unwrap();
            assert_eq!(pp.len(), 40);
            assert!(pp.points.iter().all(|p| p.x >= 0.5));
        }
    }

    #[test]
    fn fixed_n_exact_and_zero_errors() {
        let w = Window::unit_square();
        let f = |_: Point| 3.0;
        let pp = thin_poisson(&Intensity::Function { f: &f, bound: 3.0 }, &w, CountMode::Fixed(500), 1).unwrap();
        assert_eq!(pp.len(), 500);
        let z = |_: Point| 0.0;
        let err = thin_poisson(&Intensity::Function { f: &z, bound: 0.0 }, &w, CountMode::Fixed(5), 1);
        assert!(matches!(err, Err(Error::Simulation(_))));
    }

    #[test]
    fn bound_violation_is_reported() {
        let w = Window::unit_square();
        let f = |_: Point| 3.0;
        let err = thin_poisson(&Intensity::Function { f: &f, bound: 1.0 }, &w, CountMode::Fixed(5), 1);
        assert!(matches!(err, Err(Error::Simulation(_))));
    }

    #[test]
    fn cell_counts_match_integral() {
        // 5 x 5 grid on the unit square, lambda = 200 (x + y)
        let w = Window::unit_square();
        let f = |p: Point| 200.0 * (p.x + p.y);
        let it = Intensity::Function { f: &f, bound: 400.0 };
        let reps = 300;
        let mut counts = [0.0; 25];
        for s in 0..reps {
            for p in thin_poisson(&it, &w, CountMode::Rate, 1000 + s).unwrap().points {
                let (i, j) = ((p.x * 5.0).floor() as usize, (p.y * 5.0).floor() as usize);
                counts[j.min(4) * 5 + i.min(4)] += 1.0;
            }
        }
        for j in 0..5 {
            for i in 0..5 {
                let expect = 200.0 * 0.04 * ((i as f64 + 0.5) / 5.0 + (j as f64 + 0.5) / 5.0);
                let mean = counts[j * 5 + i] / reps as f64;
                let mc_sd = (expect / reps as f64).sqrt();
                assert!((mean - expect).abs() < 3.5 * mc_sd, "cell {i},{j}: {mean} vs {expect}");
            }
        }
    }

    #[test]
    fn modulation_identities() {
        assert_eq!(modulation(0.0, 3.0), 1.0);
        assert!((modulation(3.0, 3.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!(modulation(5.3, 1e6) >= 0.999);
    }

    #[test]
    fn synthetic_distances_span() {
        let w = synthetic_window();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for r in w.rings() {
            for p in r {
                let d = p.dist(SYNTHETIC_SOURCE);
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        assert!(lo >= 0.05 && hi <= 5.3, "{lo} {hi}");
        assert!(!w.contains(SYNTHETIC_SOURCE));
    }

    #[test]
    fn study_is_deterministic_and_filterable() {
        let mut sc = Scenario::full_study(11);
        sc.n_controls = 300;
        sc.case_counts = vec![50, 100];
        sc.phis = vec![1.0, 6.0];
        sc.grid_res = 40;
        let a = simulate_study(&sc).unwrap();
        let b = simulate_study(&sc).unwrap();
        assert_eq!(a.controls, b.controls);
        assert_eq!(a.datasets, b.datasets);
        assert_eq!(a.datasets.len(), 4);
        for d in &a.datasets {
            assert_eq!(d.cases.len(), d.n_cases);
            assert!(d.cases.iter().all(|p| sc.window.contains(*p)));
        }
        sc.case_counts = vec![100];
        sc.phis = vec![6.0];
        let c = simulate_study(&sc).unwrap();
        assert_eq!(c.controls, a.controls);
        assert_eq!(c.datasets[0], a.datasets.iter().find(|d| d.n_cases == 100 && d.phi == 6.0).unwrap().clone());
    }

    #[test]
    fn short_decay_pulls_cases_to_source() {
        let mut sc = Scenario::full_study(5);
        sc.n_controls = 1000;
        sc.case_counts = vec![2000];
        sc.phis = vec![1.0, 6.0];
        sc.grid_res = 60;
        let st = simulate_study(&sc).unwrap();
        let mean_d = |d: &Dataset| d.cases.iter().map(|p| p.dist(sc.source)).sum::<f64>() / d.cases.len() as f64;
        assert!(mean_d(&st.datasets[0]) < mean_d(&st.datasets[1]));
    }
}
