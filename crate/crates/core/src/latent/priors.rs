use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Prior on a positive hyperparameter. Densities are available on the
/// natural scale and on the internal log scale (including the Jacobian).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    /// Penalised-complexity prior on the range of a `dim`-dimensional Matérn field:
    /// `(dim/2) lambda r^{-dim/2-1} exp(-lambda r^{-dim/2})`.
    PcRange { dim: usize, lambda: f64 },
    /// Penalised-complexity prior on a standard deviation: `lambda exp(-lambda s)`.
    PcSd { lambda: f64 },
    /// Gamma prior on a precision, reported on the log-precision scale.
    LogGammaPrecision { shape: f64, rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcKind {
    Range2d,
    Range1d,
    Sd,
}

/// Rate of a PC prior such that the stated tail probability holds:
/// `P(range < threshold) = prob` for ranges, `P(sd > threshold) = prob` for
/// standard deviations.
pub fn pc_prior_calibrate(kind: PcKind, threshold: f64, prob: f64) -> Prior {
    assert!(threshold > 0.0 && prob > 0.0 && prob < 1.0, "invalid PC prior calibration");
    match kind {
        PcKind::Range2d => Prior::PcRange { dim: 2, lambda: -prob.ln() * threshold },
        PcKind::Range1d => Prior::PcRange { dim: 1, lambda: -prob.ln() * threshold.sqrt() },
        PcKind::Sd => Prior::PcSd { lambda: -prob.ln() / threshold },
    }
}

impl Prior {
    pub fn log_density(&self, value: f64) -> f64 {
        if value <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            Prior::PcRange { dim, lambda } => {
                let h = dim as f64 / 2.0;
                h.ln() + lambda.ln() - (h + 1.0) * value.ln() - lambda * value.powf(-h)
            }
            Prior::PcSd { lambda } => lambda.ln() - lambda * value,
            Prior::LogGammaPrecision { shape, rate } => {
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * value.ln() - rate * value
            }
        }
    }

    /// Log density of `theta = ln(value)`.
    pub fn log_density_internal(&self, theta: f64) -> f64 {
        self.log_density(theta.exp()) + theta
    }

    pub fn cdf(&self, value: f64) -> f64 {
        if value <= 0.0 {
            return 0.0;
        }
        match *self {
            Prior::PcRange { dim, lambda } => (-lambda * value.powf(-(dim as f64) / 2.0)).exp(),
            Prior::PcSd { lambda } => 1.0 - (-lambda * value).exp(),
            Prior::LogGammaPrecision { shape, rate } => {
                statrs::function::gamma::gamma_lr(shape, rate * value)
            }
        }
    }
}
