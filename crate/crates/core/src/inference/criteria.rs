use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::model::{LatentModel, Likelihood};

/// Model comparison criteria. Deviances use the pseudo-likelihood of the
/// augmented rows, so only differences between models fitted to the same
/// data are meaningful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub dic: f64,
    pub p_d: f64,
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
    pub dic_reliable: bool,
    pub waic: f64,
    pub p_waic: f64,
    pub lppd: f64,
    /// Share of rows whose variance contribution to `p_waic` is negative.
    pub negative_p_waic_share: f64,
    pub waic_reliable: bool,
    pub log_marginal_likelihood: f64,
}

/// Share of negative per-row `p_waic` terms above which WAIC is flagged.
pub const WAIC_NEGATIVE_SHARE_LIMIT: f64 = 0.05;

const HERMITE_POINTS: usize = 24;

/// Nodes and weights for `E[f(Z)]`, `Z ~ N(0, 1)` (Golub-Welsch).
fn hermite_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = HERMITE_POINTS;
        let mut j = DMatrix::zeros(n, n);
        for k in 1..n {
            let b = (k as f64).sqrt();
            j[(k, k - 1)] = b;
            j[(k - 1, k)] = b;
        }
        let eig = SymmetricEigen::new(j);
        let mut pairs: Vec<(f64, f64)> =
            (0..n).map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2))).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1 / total).collect())
    })
}

/// Per-row predictor moments under one component of the hyperparameter mixture.
pub(crate) struct Component<'a> {
    pub weight: f64,
    pub mean: &'a [f64],
    pub var: &'a [f64],
}

/// `E[loglik_k(eta)]` for `eta ~ N(m, v)`.
fn expected_loglik(model: &LatentModel, k: usize, m: f64, v: f64) -> f64 {
    match &model.likelihood {
        Likelihood::Poisson => model.y[k] * m - model.weight[k] * (m + 0.5 * v).exp(),
        Likelihood::Gaussian { precision } => {
            let p = precision[k];
            let r = model.y[k] - m;
            0.5 * (p / (2.0 * std::f64::consts::PI)).ln() - 0.5 * p * (r * r + v)
        }
    }
}

pub(crate) fn compute(model: &LatentModel, comps: &[Component<'_>], log_ml: f64) -> Criteria {
    let (nodes, gw) = hermite_rule();
    let n = model.n_rows();
    let mut mean_dev = 0.0;
    let mut dev_at_mean = 0.0;
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    let mut negative = 0usize;
    let mut lp = vec![0.0; nodes.len()];
    for k in 0..n {
        let mut eta_bar = 0.0;
        let mut e_ll = 0.0;
        // mixture moments of the pointwise log density and log of its mean
        let mut log_terms = Vec::with_capacity(comps.len());
        let mut e1 = 0.0;
        let mut e2 = 0.0;
        for c in comps {
            let (m, v) = (c.mean[k], c.var[k]);
            eta_bar += c.weight * m;
            e_ll += c.weight * expected_loglik(model, k, m, v);
            let s = v.max(0.0).sqrt();
            for (q, z) in nodes.iter().enumerate() {
                lp[q] = model.row_loglik(k, m + s * z);
            }
            let lmax = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean_p: f64 = gw.iter().zip(&lp).map(|(w, l)| w * (l - lmax).exp()).sum();
            log_terms.push(c.weight.ln() + lmax + mean_p.ln());
            let m1: f64 = gw.iter().zip(&lp).map(|(w, l)| w * l).sum();
            let m2: f64 = gw.iter().zip(&lp).map(|(w, l)| w * l * l).sum();
            e1 += c.weight * m1;
            e2 += c.weight * m2;
        }
        let top = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        lppd += top + log_terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln();
        let contrib = e2 - e1 * e1;
        if contrib < 0.0 {
            negative += 1;
        }
        p_waic += contrib;
        mean_dev += -2.0 * e_ll;
        dev_at_mean += -2.0 * model.row_loglik(k, eta_bar);
    }
    let p_d = mean_dev - dev_at_mean;
    let dic = mean_dev + p_d;
    let waic = -2.0 * (lppd - p_waic);
    let share = if n == 0 { 0.0 } else { negative as f64 / n as f64 };
    Criteria {
        dic,
        p_d,
        mean_deviance: mean_dev,
        deviance_at_mean: dev_at_mean,
        dic_reliable: dic.is_finite() && p_d >= 0.0,
        waic,
        p_waic,
        lppd,
        negative_p_waic_share: share,
        waic_reliable: waic.is_finite() && share <= WAIC_NEGATIVE_SHARE_LIMIT,
        log_marginal_likelihood: log_ml,
    }
}
