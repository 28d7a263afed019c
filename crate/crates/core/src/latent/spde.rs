use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use sprs::CsMat;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::geometry::{fem_matrices, FemMatrices, Mesh};
use crate::sparse::SymbolicCholesky;

/// SPDE smoothness exponent used for every Matérn term.
pub const ALPHA: f64 = 2.0;

/// Discretised `(kappa^2 - Laplacian)` operator with `alpha = 2`:
/// `Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^{-1} G)` stored on a fixed
/// upper-triangular pattern.
#[derive(Debug, Clone)]
pub struct SpdeOperator {
    pub dimension: usize,
    pub c_diag: Vec<f64>,
    pattern: Vec<(usize, usize)>,
    c_vals: Vec<f64>,
    g_vals: Vec<f64>,
    k_vals: Vec<f64>,
    symbolic: Arc<SymbolicCholesky>,
    positions: Vec<usize>,
}

impl SpdeOperator {
    pub fn from_mesh(mesh: &Mesh) -> Result<Self> {
        let FemMatrices { c_diag, g } = fem_matrices(mesh)?;
        Self::from_fem(2, c_diag, &g)
    }

    pub(crate) fn from_fem(dimension: usize, c_diag: Vec<f64>, g: &CsMat<f64>) -> Result<Self> {
        let n = c_diag.len();
        let g = g.to_csr();
        // upper-triangular entries of C, G and G C^{-1} G on their union pattern
        let mut entries: BTreeMap<(usize, usize), [f64; 3]> = BTreeMap::new();
        for (i, &c) in c_diag.iter().enumerate() {
            entries.entry((i, i)).or_default()[0] += c;
        }
        for (i, row) in g.outer_iterator().enumerate() {
            for (j, &v) in row.iter() {
                if i <= j {
                    entries.entry((i, j)).or_default()[1] += v;
                }
            }
        }
        for (k, row) in g.outer_iterator().enumerate() {
            let inv_c = 1.0 / c_diag[k];
            let nz: Vec<(usize, f64)> = row.iter().map(|(j, &v)| (j, v)).collect();
            for &(i, gi) in &nz {
                for &(j, gj) in &nz {
                    if i <= j {
                        entries.entry((i, j)).or_default()[2] += gi * gj * inv_c;
                    }
                }
            }
        }
        let pattern: Vec<(usize, usize)> = entries.keys().copied().collect();
        let c_vals = entries.values().map(|v| v[0]).collect();
        let g_vals = entries.values().map(|v| v[1]).collect();
        let k_vals = entries.values().map(|v| v[2]).collect();
        let symbolic = Arc::new(SymbolicCholesky::new(n, &pattern)?);
        let positions = pattern.iter().map(|&(i, j)| symbolic.position(i, j).expect("own pattern")).collect();
        Ok(SpdeOperator { dimension, c_diag, pattern, c_vals, g_vals, k_vals, symbolic, positions })
    }

    pub fn dim(&self) -> usize {
        self.c_diag.len()
    }

    pub fn nu(&self) -> f64 {
        ALPHA - self.dimension as f64 / 2.0
    }

    pub fn pattern(&self) -> &[(usize, usize)] {
        &self.pattern
    }

    pub fn values(&self, kappa: f64, tau: f64) -> Vec<f64> {
        let (k2, t2) = (kappa * kappa, tau * tau);
        (0..self.pattern.len())
            .map(|e| t2 * (k2 * k2 * self.c_vals[e] + 2.0 * k2 * self.g_vals[e] + self.k_vals[e]))
            .collect()
    }

    pub fn log_det(&self, kappa: f64, tau: f64) -> Result<f64> {
        let k2 = kappa * kappa;
        let mut vals = vec![0.0; self.symbolic.nnz_matrix()];
        for e in 0..self.pattern.len() {
            vals[self.positions[e]] += k2 * k2 * self.c_vals[e] + 2.0 * k2 * self.g_vals[e] + self.k_vals[e];
        }
        let f = self.symbolic.factor(&vals)?;
        Ok(f.log_det() + self.dim() as f64 * (tau * tau).ln())
    }

    /// `kappa` from the nominal range `sqrt(8 nu) / kappa`.
    pub fn kappa_from_range(&self, range: f64) -> f64 {
        (8.0 * self.nu()).sqrt() / range
    }

    pub fn range_from_kappa(&self, kappa: f64) -> f64 {
        (8.0 * self.nu()).sqrt() / kappa
    }

    /// `tau` giving marginal standard deviation `sd`, from
    /// `sigma^2 = Gamma(nu) / (Gamma(alpha) (4 pi)^{d/2} kappa^{2 nu} tau^2)`.
    pub fn tau_from_sd(&self, kappa: f64, sd: f64) -> f64 {
        let nu = self.nu();
        let d = self.dimension as f64;
        (gamma(nu) / (gamma(ALPHA) * (4.0 * PI).powf(d / 2.0) * kappa.powf(2.0 * nu))).sqrt() / sd
    }

    pub fn sd_from_tau(&self, kappa: f64, tau: f64) -> f64 {
        let nu = self.nu();
        let d = self.dimension as f64;
        (gamma(nu) / (gamma(ALPHA) * (4.0 * PI).powf(d / 2.0) * kappa.powf(2.0 * nu))).sqrt() / tau
    }

    /// `(kappa, tau)` from internal `(ln range, ln sd)`.
    pub fn kappa_tau(&self, theta: &[f64]) -> (f64, f64) {
        let kappa = self.kappa_from_range(theta[0].exp());
        (kappa, self.tau_from_sd(kappa, theta[1].exp()))
    }

    /// Dense precision, for tests and small diagnostics.
    pub fn dense(&self, kappa: f64, tau: f64) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut q = nalgebra::DMatrix::zeros(n, n);
        for (&(i, j), v) in self.pattern.iter().zip(self.values(kappa, tau)) {
            q[(i, j)] += v;
            if i != j {
                q[(j, i)] += v;
            }
        }
        q
    }
}

pub(crate) fn check_positive(kappa: f64, tau: f64) -> Result<()> {
    if !(kappa > 0.0 && tau > 0.0 && kappa.is_finite() && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("spde parameters must be positive, got kappa={kappa}, tau={tau}")));
    }
    Ok(())
}
