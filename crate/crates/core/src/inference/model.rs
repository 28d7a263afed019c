use std::sync::Arc;

use sprs::CsMat;

use crate::error::{Error, Result};
use crate::latent::GmrfTerm;
use crate::sparse::SymbolicCholesky;

/// Observation model for the rows of a latent Gaussian model.
#[derive(Debug, Clone, PartialEq)]
pub enum Likelihood {
    /// Poisson pseudo-likelihood `y eta - w exp(eta)`.
    Poisson,
    /// `y ~ N(eta, 1 / precision)`; used to check the engine on models where
    /// the Laplace approximation is exact.
    Gaussian { precision: Vec<f64> },
}

/// A latent term placed in the joint latent vector.
#[derive(Debug, Clone)]
pub struct Block {
    pub term: GmrfTerm,
    pub offset: usize,
    pub hyper_offset: usize,
}

impl Block {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.term.dim()
    }

    pub fn hyper_range(&self) -> std::ops::Range<usize> {
        self.hyper_offset..self.hyper_offset + self.term.n_hyper()
    }
}

/// Rows `eta = A x` with a likelihood, plus the block prior on `x`.
///
/// The joint sparsity pattern of `Q + A^T A + C^T C` is analysed once at
/// construction and reused for every hyperparameter value.
#[derive(Debug, Clone)]
pub struct LatentModel {
    pub blocks: Vec<Block>,
    pub n_latent: usize,
    pub n_hyper: usize,
    pub y: Vec<f64>,
    pub weight: Vec<f64>,
    /// Rows by latent columns, CSR.
    pub a: CsMat<f64>,
    pub likelihood: Likelihood,
    /// Constraint rows `C x = 0` in joint indices.
    pub constraints: Vec<Vec<(usize, f64)>>,
    /// Deterministic starting point of the inner optimisation.
    pub x0: Vec<f64>,
    pub(crate) symbolic: Arc<SymbolicCholesky>,
    /// Per block, slot of each prior pattern entry.
    pub(crate) prior_slots: Vec<Vec<usize>>,
    /// Per row, `(slot, a_ki a_kj)` for the upper triangle of `a_k a_k^T`.
    pub(crate) row_slots: Vec<Vec<(usize, f64)>>,
    /// `(slot, value)` of `C^T C`.
    pub(crate) constraint_slots: Vec<(usize, f64)>,
}

impl LatentModel {
    pub fn new(terms: Vec<GmrfTerm>, y: Vec<f64>, weight: Vec<f64>, a: CsMat<f64>, likelihood: Likelihood) -> Result<Self> {
        let a = a.to_csr();
        let mut blocks = Vec::with_capacity(terms.len());
        let (mut offset, mut hyper_offset) = (0, 0);
        for term in terms {
            let (m, h) = (term.dim(), term.n_hyper());
            blocks.push(Block { term, offset, hyper_offset });
            offset += m;
            hyper_offset += h;
        }
        let n = offset;
        if a.cols() != n {
            return Err(Error::InvalidSpec(format!("projector has {} columns, latent dimension is {n}", a.cols())));
        }
        if a.rows() != y.len() || weight.len() != y.len() {
            return Err(Error::InvalidSpec("rows, responses and weights differ in length".into()));
        }
        if let Likelihood::Gaussian { precision } = &likelihood {
            if precision.len() != y.len() || precision.iter().any(|p| !(*p > 0.0)) {
                return Err(Error::InvalidSpec("gaussian likelihood needs one positive precision per row".into()));
            }
        }
        if y.iter().chain(&weight).any(|v| !v.is_finite()) || weight.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidInput("responses and weights must be finite, weights nonnegative".into()));
        }

        let mut constraints = Vec::new();
        for b in &blocks {
            for c in &b.term.constraints {
                constraints.push(c.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, &v)| (b.offset + i, v)).collect::<Vec<_>>());
            }
        }

        let mut pattern: Vec<(usize, usize)> = Vec::new();
        for b in &blocks {
            pattern.extend(b.term.pattern().iter().map(|&(i, j)| (b.offset + i, b.offset + j)));
        }
        for row in a.outer_iterator() {
            let idx = row.indices();
            for (p, &i) in idx.iter().enumerate() {
                for &j in &idx[p..] {
                    pattern.push((i.min(j), i.max(j)));
                }
            }
        }
        for c in &constraints {
            for (p, &(i, _)) in c.iter().enumerate() {
                for &(j, _) in &c[p..] {
                    pattern.push((i.min(j), i.max(j)));
                }
            }
        }
        pattern.sort_unstable();
        pattern.dedup();
        let symbolic = Arc::new(SymbolicCholesky::new(n, &pattern)?);
        let slot = |i: usize, j: usize| symbolic.position(i, j).expect("entry in joint pattern");

        let prior_slots = blocks
            .iter()
            .map(|b| b.term.pattern().iter().map(|&(i, j)| slot(b.offset + i, b.offset + j)).collect())
            .collect();
        let row_slots = a
            .outer_iterator()
            .map(|row| {
                let nz: Vec<(usize, f64)> = row.iter().map(|(j, &v)| (j, v)).collect();
                let mut out = Vec::with_capacity(nz.len() * (nz.len() + 1) / 2);
                for (p, &(i, vi)) in nz.iter().enumerate() {
                    for &(j, vj) in &nz[p..] {
                        out.push((slot(i, j), vi * vj));
                    }
                }
                out
            })
            .collect();
        let mut constraint_slots = Vec::new();
        for c in &constraints {
            for (p, &(i, vi)) in c.iter().enumerate() {
                for &(j, vj) in &c[p..] {
                    constraint_slots.push((slot(i, j), vi * vj));
                }
            }
        }

        Ok(LatentModel {
            blocks,
            n_latent: n,
            n_hyper: hyper_offset,
            y,
            weight,
            a,
            likelihood,
            constraints,
            x0: vec![0.0; n],
            symbolic,
            prior_slots,
            row_slots,
            constraint_slots,
        })
    }

    pub fn with_start(mut self, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != self.n_latent {
            return Err(Error::InvalidSpec("starting point has the wrong length".into()));
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn initial_theta(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.term.initial()).collect()
    }

    pub fn hyper_names(&self) -> Vec<String> {
        self.blocks.iter().flat_map(|b| b.term.hyper.iter().map(|h| h.name.clone())).collect()
    }

    pub fn log_prior_theta(&self, theta: &[f64]) -> f64 {
        self.blocks.iter().map(|b| b.term.log_prior(&theta[b.hyper_range()])).sum()
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.term.name == name)
    }

    /// Linear predictor `A x`.
    pub fn predictor(&self, x: &[f64]) -> Vec<f64> {
        self.a.outer_iterator().map(|row| row.iter().map(|(j, &v)| v * x[j]).sum()).collect()
    }

    /// Log-likelihood of one row at predictor value `eta`, without constants
    /// for the Poisson case.
    pub fn row_loglik(&self, k: usize, eta: f64) -> f64 {
        match &self.likelihood {
            Likelihood::Poisson => self.y[k] * eta - self.weight[k] * eta.exp(),
            Likelihood::Gaussian { precision } => {
                let p = precision[k];
                let r = self.y[k] - eta;
                0.5 * (p / (2.0 * std::f64::consts::PI)).ln() - 0.5 * p * r * r
            }
        }
    }

    /// First and (negated) second derivative of the row log-likelihood.
    pub(crate) fn row_derivs(&self, k: usize, eta: f64) -> (f64, f64) {
        match &self.likelihood {
            Likelihood::Poisson => {
                let m = self.weight[k] * eta.exp();
                (self.y[k] - m, m)
            }
            Likelihood::Gaussian { precision } => (precision[k] * (self.y[k] - eta), precision[k]),
        }
    }

    pub fn loglik(&self, eta: &[f64]) -> f64 {
        eta.iter().enumerate().map(|(k, &e)| self.row_loglik(k, e)).sum()
    }

    /// Prior precision values at `theta`, placed in the joint slots.
    pub(crate) fn prior_values(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut vals = vec![0.0; self.symbolic.nnz_matrix()];
        for (b, slots) in self.blocks.iter().zip(&self.prior_slots) {
            let v = b.term.values(&theta[b.hyper_range()])?;
            for (&s, x) in slots.iter().zip(v) {
                vals[s] += x;
            }
        }
        Ok(vals)
    }

    /// `Q x` for the block-diagonal prior precision.
    pub(crate) fn prior_apply(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_latent];
        for b in &self.blocks {
            let v = b.term.values(&theta[b.hyper_range()])?;
            let o = b.offset;
            for (&(i, j), q) in b.term.pattern().iter().zip(v) {
                out[o + i] += q * x[o + j];
                if i != j {
                    out[o + j] += q * x[o + i];
                }
            }
        }
        Ok(out)
    }

    /// Log prior density of `x` given `theta`, with the generalized
    /// determinant for intrinsic blocks.
    pub fn log_prior_latent(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        let qx = self.prior_apply(theta, x)?;
        let quad: f64 = qx.iter().zip(x).map(|(a, b)| a * b).sum();
        let mut total = -0.5 * quad;
        for b in &self.blocks {
            let th = &theta[b.hyper_range()];
            let rank = (b.term.dim() - b.term.rank_deficiency()) as f64;
            total += -0.5 * rank * (2.0 * std::f64::consts::PI).ln() + 0.5 * b.term.log_det(th)?;
            if b.term.rank_deficiency() == 0 && !b.term.constraints.is_empty() {
                total -= log_constraint_density(&b.term, th)?;
            }
        }
        Ok(total)
    }
}

/// Log density at zero of the coordinates of `x` orthogonal to the set
/// `C x = 0`, under the prior of a proper term.
fn log_constraint_density(term: &GmrfTerm, theta: &[f64]) -> Result<f64> {
    let q = term.dense_precision(theta)?;
    let chol = q.cholesky().ok_or(Error::NotPositiveDefinite { pivot: 0 })?;
    let k = term.constraints.len();
    let ct = nalgebra::DMatrix::from_fn(term.dim(), k, |i, j| term.constraints[j][i]);
    let log_det = |m: nalgebra::DMatrix<f64>| -> Result<f64> {
        let c = m.cholesky().ok_or(Error::NotPositiveDefinite { pivot: 0 })?;
        Ok(2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
    };
    let cov = log_det(ct.transpose() * chol.solve(&ct))?;
    let gram = log_det(ct.transpose() * &ct)?;
    Ok(-0.5 * k as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * cov + 0.5 * gram)
}
