use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::LatentModel;
use crate::error::{Error, Result};
use crate::sparse::{CholeskyFactor, SelectedInverse};

/// Settings of the inner Newton iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonOptions {
    /// Stop when the constrained gradient has infinity norm below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Weight of `C^T C` added to the Hessian; it does not change the
    /// density on the constraint set but keeps intrinsic blocks factorizable.
    pub constraint_penalty: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tolerance: 1e-6, max_iterations: 50, constraint_penalty: 1.0 }
    }
}

/// Mode of `log p(y | x) + log p(x | theta)` on `C x = 0` and the Gaussian
/// approximation there.
#[derive(Debug, Clone)]
pub struct Mode {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
    pub eta: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Objective value at every iterate, for diagnostics.
    pub trace: Vec<f64>,
    pub(crate) factor: CholeskyFactor,
    /// `H^{-1} c_j` for each constraint row.
    pub(crate) w: Vec<Vec<f64>>,
    /// `C H^{-1} C^T`.
    pub(crate) cw: DMatrix<f64>,
}

impl LatentModel {
    /// Inner objective `sum_k loglik_k(eta_k) - x^T Q x / 2` (no constants).
    pub fn inner_objective(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        let eta = self.predictor(x);
        let qx = self.prior_apply(theta, x)?;
        Ok(self.loglik(&eta) - 0.5 * qx.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Gradient of [`LatentModel::inner_objective`].
    pub fn inner_gradient(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let eta = self.predictor(x);
        let mut g: Vec<f64> = self.prior_apply(theta, x)?.into_iter().map(|v| -v).collect();
        for (k, row) in self.a.outer_iterator().enumerate() {
            let (d1, _) = self.row_derivs(k, eta[k]);
            for (j, &v) in row.iter() {
                g[j] += v * d1;
            }
        }
        Ok(g)
    }

    /// Removes the component of `g` along the constraint rows.
    pub fn project_gradient(&self, g: &[f64]) -> Vec<f64> {
        let k = self.constraints.len();
        if k == 0 {
            return g.to_vec();
        }
        let (cct, cg) = self.constraint_gram(g);
        let lambda = cct.lu().solve(&cg).expect("constraint rows are independent");
        let mut out = g.to_vec();
        for (a, c) in self.constraints.iter().enumerate() {
            for &(i, v) in c {
                out[i] -= v * lambda[a];
            }
        }
        out
    }

    fn constraint_gram(&self, v: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let k = self.constraints.len();
        let mut cct = DMatrix::zeros(k, k);
        let mut cv = DVector::zeros(k);
        let dense: Vec<Vec<f64>> = self
            .constraints
            .iter()
            .map(|c| {
                let mut d = vec![0.0; self.n_latent];
                for &(i, x) in c {
                    d[i] = x;
                }
                d
            })
            .collect();
        for a in 0..k {
            cv[a] = self.constraints[a].iter().map(|&(i, x)| x * v[i]).sum();
            for b in 0..k {
                cct[(a, b)] = self.constraints[a].iter().map(|&(i, x)| x * dense[b][i]).sum();
            }
        }
        (cct, cv)
    }

    fn hessian(&self, theta: &[f64], eta: &[f64], penalty: f64) -> Result<CholeskyFactor> {
        let mut vals = self.prior_values(theta)?;
        for (k, slots) in self.row_slots.iter().enumerate() {
            let (_, d2) = self.row_derivs(k, eta[k]);
            if d2 != 0.0 {
                for &(s, v) in slots {
                    vals[s] += d2 * v;
                }
            }
        }
        for &(s, v) in &self.constraint_slots {
            vals[s] += penalty * v;
        }
        self.symbolic.factor(&vals)
    }

    fn constraint_solves(&self, factor: &CholeskyFactor) -> (Vec<Vec<f64>>, DMatrix<f64>) {
        let k = self.constraints.len();
        let w: Vec<Vec<f64>> = self
            .constraints
            .iter()
            .map(|c| {
                let mut d = vec![0.0; self.n_latent];
                for &(i, x) in c {
                    d[i] = x;
                }
                factor.solve(&d)
            })
            .collect();
        let mut cw = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                cw[(a, b)] = self.constraints[a].iter().map(|&(i, x)| x * w[b][i]).sum();
            }
        }
        (w, cw)
    }

    /// Moves `x` onto `C x = 0` along `H^{-1} C^T`.
    fn krige(&self, x: &mut [f64], w: &[Vec<f64>], cw: &DMatrix<f64>) {
        if w.is_empty() {
            return;
        }
        let cx = DVector::from_iterator(
            self.constraints.len(),
            self.constraints.iter().map(|c| c.iter().map(|&(i, v)| v * x[i]).sum::<f64>()),
        );
        let lambda = cw.clone().lu().solve(&cx).expect("constraint covariance is nonsingular");
        for (a, wa) in w.iter().enumerate() {
            for (xi, wi) in x.iter_mut().zip(wa) {
                *xi -= wi * lambda[a];
            }
        }
    }

    /// Newton iteration for the conditional mode at `theta`.
    pub fn find_mode(&self, theta: &[f64], opts: &NewtonOptions) -> Result<Mode> {
        if theta.len() != self.n_hyper {
            return Err(Error::InvalidInput(format!("expected {} hyperparameters, got {}", self.n_hyper, theta.len())));
        }
        let mut x = self.x0.clone();
        if !self.constraints.is_empty() {
            let (cct, cx) = self.constraint_gram(&x);
            let lambda = cct.lu().solve(&cx).expect("constraint rows are independent");
            for (a, c) in self.constraints.iter().enumerate() {
                for &(i, v) in c {
                    x[i] -= v * lambda[a];
                }
            }
        }
        let mut f = self.inner_objective(theta, &x)?;
        let mut trace = vec![f];
        let mut iterations = 0;
        loop {
            let eta = self.predictor(&x);
            let g = self.inner_gradient(theta, &x)?;
            let gnorm = self.project_gradient(&g).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let factor = self.hessian(theta, &eta, opts.constraint_penalty)?;
            let (w, cw) = self.constraint_solves(&factor);
            if gnorm < opts.tolerance {
                return Ok(Mode { theta: theta.to_vec(), x, eta, iterations, gradient_norm: gnorm, trace, factor, w, cw });
            }
            if iterations == opts.max_iterations || !gnorm.is_finite() {
                return Err(Error::NewtonDiverged { iterations, trace });
            }
            let delta = factor.solve(&g);
            let mut target: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
            self.krige(&mut target, &w, &cw);
            let step: Vec<f64> = target.iter().zip(&x).map(|(a, b)| a - b).collect();
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + t * s).collect();
                let fc = self.inner_objective(theta, &cand)?;
                if fc.is_finite() && fc >= f - 1e-10 * f.abs().max(1.0) {
                    x = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            iterations += 1;
            trace.push(f);
            if !accepted {
                return Err(Error::NewtonDiverged { iterations, trace });
            }
        }
    }

    /// Laplace approximation to `log p(y | theta)`.
    pub fn log_marginal(&self, theta: &[f64], opts: &NewtonOptions) -> Result<(f64, Mode)> {
        let mode = self.find_mode(theta, opts)?;
        let value = self.log_marginal_at(&mode)?;
        Ok((value, mode))
    }

    pub(crate) fn log_marginal_at(&self, mode: &Mode) -> Result<f64> {
        let ll = self.loglik(&mode.eta);
        let lp = self.log_prior_latent(&mode.theta, &mode.x)?;
        let n = self.n_latent as f64;
        let k = self.constraints.len() as f64;
        let mut lg = -0.5 * (n - k) * (2.0 * PI).ln() + 0.5 * mode.factor.log_det();
        if !self.constraints.is_empty() {
            let (cct, _) = self.constraint_gram(&vec![0.0; self.n_latent]);
            lg += 0.5 * log_det_dense(&mode.cw)? - 0.5 * log_det_dense(&cct)?;
        }
        Ok(ll + lp - lg)
    }
}

fn log_det_dense(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite { pivot: 0 })?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Gaussian approximation with marginal variances, corrected for the
/// linear constraints.
#[derive(Debug, Clone)]
pub struct GaussianApprox {
    pub mode: Mode,
    selinv: SelectedInverse,
    cw_inv: DMatrix<f64>,
}

impl GaussianApprox {
    pub fn new(mode: Mode) -> Self {
        let selinv = mode.factor.selected_inverse();
        let cw_inv = if mode.w.is_empty() {
            DMatrix::zeros(0, 0)
        } else {
            mode.cw.clone().try_inverse().expect("constraint covariance is nonsingular")
        };
        GaussianApprox { mode, selinv, cw_inv }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mode.x
    }

    /// Variance of `b^T x`.
    pub fn lincomb_var(&self, b: &[(usize, f64)]) -> f64 {
        let base = match self.selinv.quad(b) {
            Some(v) => v,
            None => self.mode.factor.quad_inverse(b),
        };
        let k = self.mode.w.len();
        if k == 0 {
            return base.max(0.0);
        }
        let bw = DVector::from_iterator(k, self.mode.w.iter().map(|w| b.iter().map(|&(i, v)| v * w[i]).sum::<f64>()));
        (base - (bw.transpose() * &self.cw_inv * &bw)[(0, 0)]).max(0.0)
    }

    pub fn lincomb_mean(&self, b: &[(usize, f64)]) -> f64 {
        b.iter().map(|&(i, v)| v * self.mode.x[i]).sum()
    }

    pub fn marginal_variances(&self) -> Vec<f64> {
        let d = self.selinv.diag();
        if self.mode.w.is_empty() {
            return d;
        }
        let k = self.mode.w.len();
        (0..d.len())
            .map(|i| {
                let wi = DVector::from_iterator(k, self.mode.w.iter().map(|w| w[i]));
                (d[i] - (wi.transpose() * &self.cw_inv * &wi)[(0, 0)]).max(0.0)
            })
            .collect()
    }

    /// Mean and variance of every row predictor.
    pub fn predictor_moments(&self, model: &LatentModel) -> (Vec<f64>, Vec<f64>) {
        let var = model
            .a
            .outer_iterator()
            .map(|row| {
                let b: Vec<(usize, f64)> = row.iter().map(|(j, &v)| (j, v)).collect();
                self.lincomb_var(&b)
            })
            .collect();
        (self.mode.eta.clone(), var)
    }
}
