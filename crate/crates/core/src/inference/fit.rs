use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::criteria::{self, Component, Criteria};
use super::laplace::{GaussianApprox, Mode, NewtonOptions};
use super::model::LatentModel;
use crate::error::{Error, Result};
use crate::latent::ReportedScale;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub newton: NewtonOptions,
    pub max_outer_iterations: usize,
    /// Convergence threshold on the infinity norm of the outer gradient.
    pub gradient_tolerance: f64,
    /// Step of the central differences for the outer gradient.
    pub gradient_step: f64,
    /// Step of the finite-difference Hessian at the mode.
    pub hessian_step: f64,
    /// Longest quasi-Newton step on the log scale.
    pub max_step: f64,
    /// Explore a central composite design around the mode; otherwise use the mode only.
    pub explore: bool,
    /// Distance of design points from the mode, in posterior sd units.
    pub design_radius: f64,
    /// Cap on the posterior sd used to place design points (log scale).
    pub max_design_sd: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            newton: NewtonOptions::default(),
            max_outer_iterations: 100,
            gradient_tolerance: 5e-3,
            gradient_step: 1e-3,
            hessian_step: 0.05,
            max_step: 1.0,
            explore: true,
            design_radius: 1.0,
            max_design_sd: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSummary {
    pub name: String,
    pub scale: ReportedScale,
    /// Mode and sd on the internal log scale.
    pub mode: f64,
    pub sd: f64,
    /// Mode and 95% interval on the reported scale.
    pub reported_mode: f64,
    pub reported_lower: f64,
    pub reported_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub theta: Vec<f64>,
    pub log_posterior: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub outer_iterations: usize,
    pub outer_gradient_norm: f64,
    pub inner_iterations: usize,
    pub inner_gradient_norm: f64,
    pub evaluations: usize,
    pub objective_trace: Vec<f64>,
}

/// Posterior summary of a fitted latent Gaussian model.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub hyper: Vec<HyperSummary>,
    pub theta_mode: Vec<f64>,
    pub grid: Vec<GridPoint>,
    pub latent_mean: Vec<f64>,
    pub latent_sd: Vec<f64>,
    pub predictor_mean: Vec<f64>,
    pub predictor_sd: Vec<f64>,
    pub criteria: Criteria,
    pub diagnostics: Diagnostics,
    /// Gaussian approximation at each grid point, aligned with `grid`.
    #[serde(skip)]
    pub approximations: Vec<GaussianApprox>,
}

impl FitResult {
    /// Index of the grid point at the hyperparameter mode.
    pub fn modal_index(&self) -> usize {
        0
    }

    /// Mixture mean and sd of a linear combination of latent nodes.
    pub fn lincomb(&self, b: &[(usize, f64)]) -> (f64, f64) {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (g, ap) in self.grid.iter().zip(&self.approximations) {
            let m = ap.lincomb_mean(b);
            let v = ap.lincomb_var(b);
            m1 += g.weight * m;
            m2 += g.weight * (v + m * m);
        }
        (m1, (m2 - m1 * m1).max(0.0).sqrt())
    }

    /// Mixture probability that a linear combination exceeds `threshold`.
    pub fn exceedance_lincomb(&self, b: &[(usize, f64)], threshold: f64) -> f64 {
        let std = Normal::standard();
        let mut p = 0.0;
        for (g, ap) in self.grid.iter().zip(&self.approximations) {
            let m = ap.lincomb_mean(b) - threshold;
            let s = ap.lincomb_var(b).sqrt();
            let q = if s > 0.0 {
                std.cdf(m / s)
            } else if m > 0.0 {
                1.0
            } else if m < 0.0 {
                0.0
            } else {
                0.5
            };
            p += g.weight * q;
        }
        p.clamp(0.0, 1.0)
    }

    /// Mixture marginal of a single latent node.
    pub fn node(&self, i: usize) -> (f64, f64) {
        (self.latent_mean[i], self.latent_sd[i])
    }
}

/// Log posterior of the hyperparameters up to a constant.
fn objective(model: &LatentModel, theta: &[f64], opts: &NewtonOptions) -> Result<(f64, Mode)> {
    let (lm, mode) = model.log_marginal(theta, opts)?;
    Ok((lm + model.log_prior_theta(theta), mode))
}

fn value(model: &LatentModel, theta: &[f64], opts: &NewtonOptions) -> f64 {
    match objective(model, theta, opts) {
        Ok((v, _)) if v.is_finite() => v,
        _ => f64::NEG_INFINITY,
    }
}

/// Central-difference gradient of the hyperparameter log posterior.
pub fn outer_gradient(model: &LatentModel, theta: &[f64], step: f64, opts: &NewtonOptions) -> Result<Vec<f64>> {
    let d = theta.len();
    let evals: Vec<f64> = (0..2 * d)
        .into_par_iter()
        .map(|e| {
            let mut t = theta.to_vec();
            t[e / 2] += if e % 2 == 0 { step } else { -step };
            value(model, &t, opts)
        })
        .collect();
    let g: Vec<f64> = (0..d).map(|i| (evals[2 * i] - evals[2 * i + 1]) / (2.0 * step)).collect();
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::OptimizerFailed {
            message: format!("non-finite gradient at theta = {theta:?}"),
            trace: evals,
        });
    }
    Ok(g)
}

/// Finite-difference Hessian of the hyperparameter log posterior.
fn outer_hessian(model: &LatentModel, theta: &[f64], f0: f64, h: f64, opts: &NewtonOptions) -> DMatrix<f64> {
    let d = theta.len();
    let mut jobs: Vec<(usize, usize, f64, f64)> = Vec::new();
    for i in 0..d {
        jobs.push((i, i, h, 0.0));
        jobs.push((i, i, -h, 0.0));
        for j in i + 1..d {
            for (si, sj) in [(h, h), (h, -h), (-h, h), (-h, -h)] {
                jobs.push((i, j, si, sj));
            }
        }
    }
    let vals: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, j, si, sj)| {
            let mut t = theta.to_vec();
            t[i] += si;
            if i != j {
                t[j] += sj;
            }
            value(model, &t, opts)
        })
        .collect();
    let mut hess = DMatrix::zeros(d, d);
    let mut p = 0;
    for i in 0..d {
        hess[(i, i)] = (vals[p] - 2.0 * f0 + vals[p + 1]) / (h * h);
        p += 2;
        for j in i + 1..d {
            let v = (vals[p] - vals[p + 1] - vals[p + 2] + vals[p + 3]) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
            p += 4;
        }
    }
    hess
}

struct Optimum {
    theta: Vec<f64>,
    value: f64,
    iterations: usize,
    gradient_norm: f64,
    evaluations: usize,
    trace: Vec<f64>,
}

/// BFGS on the negative log posterior with backtracking line search.
fn maximize(model: &LatentModel, opts: &FitOptions) -> Result<Optimum> {
    let d = model.n_hyper;
    let mut theta = model.initial_theta();
    let mut f = value(model, &theta, &opts.newton);
    let mut evaluations = 1;
    if !f.is_finite() {
        // surface the underlying error
        objective(model, &theta, &opts.newton)?;
        return Err(Error::OptimizerFailed { message: "non-finite objective at the start".into(), trace: vec![f] });
    }
    let mut trace = vec![f];
    if d == 0 {
        return Ok(Optimum { theta, value: f, iterations: 0, gradient_norm: 0.0, evaluations, trace });
    }
    let mut g = outer_gradient(model, &theta, opts.gradient_step, &opts.newton)?;
    evaluations += 2 * d;
    let mut hinv = DMatrix::<f64>::identity(d, d);
    let mut iterations = 0;
    loop {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < opts.gradient_tolerance {
            return Ok(Optimum { theta, value: f, iterations, gradient_norm: gnorm, evaluations, trace });
        }
        if iterations >= opts.max_outer_iterations {
            return Err(Error::OptimizerFailed {
                message: format!("no convergence after {iterations} iterations, gradient norm {gnorm:.3e}"),
                trace,
            });
        }
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let mut dir = &hinv * &gv;
        if dir.dot(&gv) <= 0.0 {
            hinv = DMatrix::identity(d, d);
            dir = gv.clone();
        }
        let norm = dir.norm();
        if norm > opts.max_step {
            dir *= opts.max_step / norm;
        }
        let slope = dir.dot(&gv);
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..30 {
            let cand: Vec<f64> = theta.iter().zip(dir.iter()).map(|(a, b)| a + t * b).collect();
            let fc = value(model, &cand, &opts.newton);
            evaluations += 1;
            if fc.is_finite() && fc >= f + 1e-4 * t * slope {
                next = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = next else {
            // no ascent along a fresh gradient direction: the mode is resolved to noise level
            if hinv == DMatrix::identity(d, d) {
                return Ok(Optimum { theta, value: f, iterations, gradient_norm: gnorm, evaluations, trace });
            }
            hinv = DMatrix::identity(d, d);
            continue;
        };
        let gn = outer_gradient(model, &cand, opts.gradient_step, &opts.newton)?;
        evaluations += 2 * d;
        let s = DVector::from_iterator(d, cand.iter().zip(&theta).map(|(a, b)| a - b));
        // gradients of the negated objective
        let y = DVector::from_iterator(d, g.iter().zip(&gn).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(d, d);
            let left = &i - rho * &s * y.transpose();
            let right = &i - rho * &y * s.transpose();
            hinv = &left * &hinv * &right + rho * &s * s.transpose();
        }
        let improvement = fc - f;
        theta = cand;
        f = fc;
        g = gn;
        trace.push(f);
        if improvement < 1e-10 * f.abs().max(1.0) && t < 1.0 {
            let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            return Ok(Optimum { theta, value: f, iterations, gradient_norm: gnorm, evaluations, trace });
        }
    }
}

/// Central composite design in standardized coordinates.
fn design(d: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]];
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut p = vec![0.0; d];
            p[i] = s;
            pts.push(p);
        }
    }
    if (2..=5).contains(&d) {
        for mask in 0..(1usize << d) {
            pts.push((0..d).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect());
        }
    }
    pts
}

/// Fits the model: hyperparameter mode, design exploration around it,
/// mixture marginals and criteria.
pub fn fit(model: &LatentModel, opts: &FitOptions) -> Result<FitResult> {
    let opt = maximize(model, opts)?;
    let d = model.n_hyper;
    let names = model.hyper_names();
    let scales: Vec<ReportedScale> = model.blocks.iter().flat_map(|b| b.term.hyper.iter().map(|h| h.scale)).collect();

    let (neg_hess, sds, points) = if d == 0 {
        (DMatrix::zeros(0, 0), Vec::new(), vec![opt.theta.clone()])
    } else {
        let hess = outer_hessian(model, &opt.theta, opt.value, opts.hessian_step, &opts.newton);
        let neg = -hess;
        let eig = SymmetricEigen::new(neg.clone());
        let floor = 1.0 / (opts.max_design_sd * opts.max_design_sd);
        let lam: Vec<f64> = eig.eigenvalues.iter().map(|&l| if l.is_finite() { l.max(floor) } else { floor }).collect();
        let v = &eig.eigenvectors;
        let mut cov = DMatrix::zeros(d, d);
        for k in 0..d {
            let col = v.column(k);
            cov += (col * col.transpose()) / lam[k];
        }
        let sds: Vec<f64> = (0..d).map(|i| cov[(i, i)].sqrt()).collect();
        let pts: Vec<Vec<f64>> = if opts.explore {
            design(d)
                .into_iter()
                .map(|z| {
                    let mut t = opt.theta.clone();
                    for k in 0..d {
                        let step = opts.design_radius * z[k] / lam[k].sqrt();
                        for i in 0..d {
                            t[i] += v[(i, k)] * step;
                        }
                    }
                    t
                })
                .collect()
        } else {
            vec![opt.theta.clone()]
        };
        let mut neg_sym = neg;
        neg_sym.fill_lower_triangle_with_upper_triangle();
        (neg_sym, sds, pts)
    };

    let evaluated: Vec<Option<(f64, GaussianApprox)>> = points
        .par_iter()
        .map(|t| match objective(model, t, &opts.newton) {
            Ok((v, mode)) if v.is_finite() => Some((v, GaussianApprox::new(mode))),
            _ => None,
        })
        .collect();
    // design points that fail are dropped; the mode itself must succeed
    if evaluated[0].is_none() {
        return Err(Error::OptimizerFailed { message: "could not re-evaluate the hyperparameter mode".into(), trace: opt.trace });
    }
    let mut grid = Vec::new();
    let mut approximations = Vec::new();
    for (t, e) in points.into_iter().zip(evaluated) {
        if let Some((lp, ap)) = e {
            grid.push(GridPoint { theta: t, log_posterior: lp, weight: 0.0 });
            approximations.push(ap);
        }
    }
    let top = grid.iter().map(|g| g.log_posterior).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = grid.iter().map(|g| (g.log_posterior - top).exp()).sum();
    for g in grid.iter_mut() {
        g.weight = (g.log_posterior - top).exp() / total;
    }

    let n = model.n_latent;
    let moments: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = approximations
        .par_iter()
        .map(|ap| {
            let (pm, pv) = ap.predictor_moments(model);
            (ap.marginal_variances(), pm, pv)
        })
        .collect();
    let mut m1 = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    let rows = model.n_rows();
    let mut e1 = vec![0.0; rows];
    let mut e2 = vec![0.0; rows];
    for ((g, ap), (var, pm, pv)) in grid.iter().zip(&approximations).zip(&moments) {
        for i in 0..n {
            let m = ap.mean()[i];
            m1[i] += g.weight * m;
            m2[i] += g.weight * (var[i] + m * m);
        }
        for k in 0..rows {
            e1[k] += g.weight * pm[k];
            e2[k] += g.weight * (pv[k] + pm[k] * pm[k]);
        }
    }
    let latent_sd = m1.iter().zip(&m2).map(|(a, b)| (b - a * a).max(0.0).sqrt()).collect();
    let predictor_sd = e1.iter().zip(&e2).map(|(a, b)| (b - a * a).max(0.0).sqrt()).collect();

    let log_ml = if d == 0 {
        opt.value
    } else {
        let logdet = match neg_hess.clone().cholesky() {
            Some(c) => 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
            None => f64::NAN,
        };
        opt.value + 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet
    };
    let comps: Vec<Component<'_>> = grid
        .iter()
        .zip(&moments)
        .map(|(g, (_, pm, pv))| Component { weight: g.weight, mean: pm, var: pv })
        .collect();
    let criteria = criteria::compute(model, &comps, log_ml);

    let hyper = (0..d)
        .map(|i| HyperSummary {
            name: names[i].clone(),
            scale: scales[i],
            mode: opt.theta[i],
            sd: sds[i],
            reported_mode: opt.theta[i].exp(),
            reported_lower: (opt.theta[i] - 1.959_963_984_540_054 * sds[i]).exp(),
            reported_upper: (opt.theta[i] + 1.959_963_984_540_054 * sds[i]).exp(),
        })
        .collect();
    let modal = &approximations[0].mode;
    let diagnostics = Diagnostics {
        outer_iterations: opt.iterations,
        outer_gradient_norm: opt.gradient_norm,
        inner_iterations: modal.iterations,
        inner_gradient_norm: modal.gradient_norm,
        evaluations: opt.evaluations,
        objective_trace: opt.trace,
    };
    Ok(FitResult {
        hyper,
        theta_mode: opt.theta,
        grid,
        latent_mean: m1,
        latent_sd,
        predictor_mean: e1,
        predictor_sd,
        criteria,
        diagnostics,
        approximations,
    })
}
