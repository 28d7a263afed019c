//! Latent Gaussian terms: Matérn fields through the SPDE construction in one
//! and two dimensions, first-order random walks, fixed effects, and the
//! priors on their hyperparameters.
//!
//! Every term stores its precision on a fixed upper-triangular pattern so the
//! joint sparsity structure (and its fill-reducing ordering) is computed once.

mod matern;
mod priors;
mod spde;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use matern::{bessel_k, matern_cov};
pub use priors::{pc_prior_calibrate, PcKind, Prior};
pub use spde::{SpdeOperator, ALPHA};

use crate::error::{Error, Result};
use crate::geometry::{fem_matrices_1d, Mesh};

/// Scale on which a hyperparameter is reported. Internally every one of
/// them is the natural logarithm of the reported value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportedScale {
    NominalRange,
    NominalSd,
    Precision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameter {
    pub name: String,
    pub prior: Prior,
    pub scale: ReportedScale,
    /// Starting value on the internal (log) scale.
    pub initial: f64,
}

impl Hyperparameter {
    pub fn reported(&self, internal: f64) -> f64 {
        internal.exp()
    }
}

/// Gaussian prior on a regression coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedEffect {
    pub name: String,
    pub covariate: String,
    pub precision: f64,
}

impl FixedEffect {
    pub const DEFAULT_PRECISION: f64 = 1000.0;

    pub fn new(name: impl Into<String>, covariate: impl Into<String>) -> Self {
        FixedEffect { name: name.into(), covariate: covariate.into(), precision: Self::DEFAULT_PRECISION }
    }
}

/// How data rows are mapped onto the latent nodes of a term.
#[derive(Debug, Clone)]
pub enum Support {
    /// Barycentric interpolation on a triangulation.
    Mesh(Arc<Mesh>),
    /// Piecewise-linear interpolation between knots, clamped at both ends.
    Linear(Vec<f64>),
    /// Indicator of the nearest knot.
    Nearest(Vec<f64>),
    /// Rows are built by the caller (intercepts, coefficients).
    Direct,
}

#[derive(Debug, Clone)]
pub enum TermKind {
    /// Matérn field, hyperparameters `(ln range, ln sd)`.
    Spde(Arc<SpdeOperator>),
    /// `exp(theta) R` for a fixed structure matrix `R`.
    Scaled {
        pattern: Vec<(usize, usize)>,
        values: Vec<f64>,
        /// Log of the product of the nonzero eigenvalues of `R`.
        log_det_structure: f64,
        rank_deficiency: usize,
    },
    /// Fixed diagonal precision, no hyperparameters.
    Fixed { precision: Vec<f64> },
    /// Fixed sparse precision, no hyperparameters.
    Given { pattern: Vec<(usize, usize)>, values: Vec<f64>, log_det: f64 },
}

/// A block of the latent vector with its prior.
#[derive(Debug, Clone)]
pub struct GmrfTerm {
    pub name: String,
    pub kind: TermKind,
    pub support: Support,
    pub hyper: Vec<Hyperparameter>,
    /// Linear constraints `C x = 0` imposed at inference, as dense rows.
    pub constraints: Vec<Vec<f64>>,
}

impl GmrfTerm {
    pub fn dim(&self) -> usize {
        match &self.kind {
            TermKind::Spde(op) => op.dim(),
            TermKind::Scaled { pattern, .. } | TermKind::Given { pattern, .. } => {
                pattern.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0)
            }
            TermKind::Fixed { precision } => precision.len(),
        }
    }

    pub fn n_hyper(&self) -> usize {
        self.hyper.len()
    }

    pub fn rank_deficiency(&self) -> usize {
        match &self.kind {
            TermKind::Scaled { rank_deficiency, .. } => *rank_deficiency,
            _ => 0,
        }
    }

    /// Upper-triangular pattern of the precision (diagonal always present).
    pub fn pattern(&self) -> Vec<(usize, usize)> {
        match &self.kind {
            TermKind::Spde(op) => op.pattern().to_vec(),
            TermKind::Scaled { pattern, .. } | TermKind::Given { pattern, .. } => pattern.clone(),
            TermKind::Fixed { precision } => (0..precision.len()).map(|i| (i, i)).collect(),
        }
    }

    /// Precision values aligned with [`GmrfTerm::pattern`].
    pub fn values(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        Ok(match &self.kind {
            TermKind::Spde(op) => {
                let (kappa, tau) = op.kappa_tau(theta);
                spde::check_positive(kappa, tau)?;
                op.values(kappa, tau)
            }
            TermKind::Scaled { values, .. } => {
                let s = theta[0].exp();
                values.iter().map(|v| s * v).collect()
            }
            TermKind::Fixed { precision } => precision.clone(),
            TermKind::Given { values, .. } => values.clone(),
        })
    }

    /// Log of the (generalized, for intrinsic terms) determinant of the precision.
    pub fn log_det(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        match &self.kind {
            TermKind::Spde(op) => {
                let (kappa, tau) = op.kappa_tau(theta);
                spde::check_positive(kappa, tau)?;
                op.log_det(kappa, tau)
            }
            TermKind::Scaled { log_det_structure, rank_deficiency, .. } => {
                Ok((self.dim() - rank_deficiency) as f64 * theta[0] + log_det_structure)
            }
            TermKind::Fixed { precision } => Ok(precision.iter().map(|p| p.ln()).sum()),
            TermKind::Given { log_det, .. } => Ok(*log_det),
        }
    }

    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        self.hyper.iter().zip(theta).map(|(h, &t)| h.prior.log_density_internal(t)).sum()
    }

    pub fn initial(&self) -> Vec<f64> {
        self.hyper.iter().map(|h| h.initial).collect()
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.hyper.len() || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "term {} expects {} finite hyperparameters, got {:?}",
                self.name,
                self.hyper.len(),
                theta
            )));
        }
        Ok(())
    }

    /// Projector row for a scalar covariate (distance) on a 1-D support.
    pub fn project_scalar(&self, value: f64) -> Result<Vec<(usize, f64)>> {
        match &self.support {
            Support::Linear(knots) => Ok(linear_row(knots, value)),
            Support::Nearest(knots) => Ok(vec![(nearest_knot(knots, value), 1.0)]),
            _ => Err(Error::InvalidSpec(format!("term {} has no scalar support", self.name))),
        }
    }

    /// Dense precision at `theta`, for diagnostics and small tests.
    pub fn dense_precision(&self, theta: &[f64]) -> Result<nalgebra::DMatrix<f64>> {
        let n = self.dim();
        let mut q = nalgebra::DMatrix::zeros(n, n);
        for (&(i, j), v) in self.pattern().iter().zip(self.values(theta)?) {
            q[(i, j)] += v;
            if i != j {
                q[(j, i)] += v;
            }
        }
        Ok(q)
    }
}

fn linear_row(knots: &[f64], value: f64) -> Vec<(usize, f64)> {
    let last = knots.len() - 1;
    if value <= knots[0] {
        return vec![(0, 1.0)];
    }
    if value >= knots[last] {
        return vec![(last, 1.0)];
    }
    let k = knots.partition_point(|&t| t <= value) - 1;
    let w = (value - knots[k]) / (knots[k + 1] - knots[k]);
    if w == 0.0 {
        vec![(k, 1.0)]
    } else {
        vec![(k, 1.0 - w), (k + 1, w)]
    }
}

fn nearest_knot(knots: &[f64], value: f64) -> usize {
    let k = knots.partition_point(|&t| t < value);
    if k == 0 {
        0
    } else if k == knots.len() {
        k - 1
    } else if value - knots[k - 1] <= knots[k] - value {
        k - 1
    } else {
        k
    }
}

/// Prior thresholds for a Matérn term: `P(range < range_threshold) =
/// range_prob` and `P(sd > sd_threshold) = sd_prob`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternPriors {
    pub range_threshold: f64,
    pub range_prob: f64,
    pub sd_threshold: f64,
    pub sd_prob: f64,
}

impl Default for MaternPriors {
    fn default() -> Self {
        MaternPriors { range_threshold: 5.0, range_prob: 0.95, sd_threshold: 10.0, sd_prob: 0.01 }
    }
}

fn matern_hyper(name: &str, dim: usize, priors: &MaternPriors, range0: f64, sd0: f64) -> Vec<Hyperparameter> {
    let kind = if dim == 2 { PcKind::Range2d } else { PcKind::Range1d };
    vec![
        Hyperparameter {
            name: format!("{name}.range"),
            prior: pc_prior_calibrate(kind, priors.range_threshold, priors.range_prob),
            scale: ReportedScale::NominalRange,
            initial: range0.ln(),
        },
        Hyperparameter {
            name: format!("{name}.sd"),
            prior: pc_prior_calibrate(PcKind::Sd, priors.sd_threshold, priors.sd_prob),
            scale: ReportedScale::NominalSd,
            initial: sd0.ln(),
        },
    ]
}

/// Two-dimensional Matérn field (`nu = 1`) on the mesh nodes. The starting
/// range is a third of the mesh diameter and the starting sd is 1.
pub fn spde2d_term(name: &str, mesh: Arc<Mesh>, priors: &MaternPriors) -> Result<GmrfTerm> {
    let op = SpdeOperator::from_mesh(&mesh)?;
    let (lo, hi) = mesh.vertices.iter().fold(
        ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY)),
        |(lo, hi), p| ((lo.0.min(p.x), lo.1.min(p.y)), (hi.0.max(p.x), hi.1.max(p.y))),
    );
    let diam = ((hi.0 - lo.0).powi(2) + (hi.1 - lo.1).powi(2)).sqrt();
    Ok(GmrfTerm {
        name: name.to_string(),
        kind: TermKind::Spde(Arc::new(op)),
        support: Support::Mesh(mesh),
        hyper: matern_hyper(name, 2, priors, diam / 3.0, 1.0),
        constraints: Vec::new(),
    })
}

/// One-dimensional Matérn process (`nu = 3/2`) on sorted knots.
pub fn spde1d_term(name: &str, knots: Vec<f64>, priors: &MaternPriors) -> Result<GmrfTerm> {
    check_knots(&knots, 3)?;
    let (c, g) = fem_matrices_1d(&knots);
    let op = SpdeOperator::from_fem(1, c, &g)?;
    let span = knots[knots.len() - 1] - knots[0];
    Ok(GmrfTerm {
        name: name.to_string(),
        kind: TermKind::Spde(Arc::new(op)),
        support: Support::Linear(knots),
        hyper: matern_hyper(name, 1, priors, span / 2.0, 1.0),
        constraints: Vec::new(),
    })
}

/// Default RW1 precision prior: gamma(shape 1, rate 5e-5) on the precision.
pub const RW1_PRIOR: Prior = Prior::LogGammaPrecision { shape: 1.0, rate: 5e-5 };

/// First-order random walk on knots with a sum-to-zero constraint.
pub fn rw1_term(name: &str, knots: Vec<f64>, prior: Prior) -> Result<GmrfTerm> {
    check_knots(&knots, 2)?;
    let r = knots.len();
    let mut pattern = Vec::with_capacity(2 * r - 1);
    let mut values = Vec::with_capacity(2 * r - 1);
    for i in 0..r {
        let deg = if i == 0 || i == r - 1 { 1.0 } else { 2.0 };
        pattern.push((i, i));
        values.push(deg);
        if i + 1 < r {
            pattern.push((i, i + 1));
            values.push(-1.0);
        }
    }
    Ok(GmrfTerm {
        name: name.to_string(),
        kind: TermKind::Scaled {
            pattern,
            values,
            // the path Laplacian on r nodes has pseudo-determinant r
            log_det_structure: (r as f64).ln(),
            rank_deficiency: 1,
        },
        support: Support::Nearest(knots),
        hyper: vec![Hyperparameter {
            name: format!("{name}.precision"),
            prior,
            scale: ReportedScale::Precision,
            initial: 0.0,
        }],
        constraints: vec![vec![1.0; r]],
    })
}

/// `r` equally spaced knots on `[0, max_distance]`.
pub fn equispaced_knots(r: usize, max_distance: f64) -> Vec<f64> {
    (0..r).map(|i| max_distance * i as f64 / (r - 1).max(1) as f64).collect()
}

/// Independent Gaussian coefficients with fixed precisions.
pub fn fixed_term(name: &str, precision: Vec<f64>) -> GmrfTerm {
    GmrfTerm {
        name: name.to_string(),
        kind: TermKind::Fixed { precision },
        support: Support::Direct,
        hyper: Vec::new(),
        constraints: Vec::new(),
    }
}

/// Term with a known, fixed, positive definite precision (upper triangle).
pub fn given_term(name: &str, n: usize, upper: &[(usize, usize, f64)]) -> Result<GmrfTerm> {
    let mut entries = std::collections::BTreeMap::new();
    for i in 0..n {
        entries.insert((i, i), 0.0);
    }
    for &(i, j, v) in upper {
        let key = (i.min(j), i.max(j));
        if key.1 >= n {
            return Err(Error::InvalidInput(format!("entry ({i},{j}) outside {n}x{n}")));
        }
        *entries.entry(key).or_insert(0.0) += v;
    }
    let pattern: Vec<(usize, usize)> = entries.keys().copied().collect();
    let values: Vec<f64> = entries.values().copied().collect();
    let triplets: Vec<(usize, usize, f64)> = pattern.iter().zip(&values).map(|(&(i, j), &v)| (i, j, v)).collect();
    let log_det = crate::sparse::factor_triplets(n, &triplets)?.log_det();
    Ok(GmrfTerm {
        name: name.to_string(),
        kind: TermKind::Given { pattern, values, log_det },
        support: Support::Direct,
        hyper: Vec::new(),
        constraints: Vec::new(),
    })
}

fn check_knots(knots: &[f64], min: usize) -> Result<()> {
    if knots.len() < min {
        return Err(Error::InvalidSpec(format!("need at least {min} knots, got {}", knots.len())));
    }
    if knots.windows(2).any(|w| !(w[1] > w[0])) || knots.iter().any(|k| !k.is_finite()) {
        return Err(Error::InvalidSpec("knots must be finite and strictly increasing".into()));
    }
    Ok(())
}
