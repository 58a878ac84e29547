//! Gaussian policies, tanh squashing and mutual-information estimators.
//!
//! Every log-probability here is a sum over action dimensions, so
//! information quantities are totals in nats.

mod discrete;
mod marginal;

pub use discrete::{entropy as pmf_entropy, DiscreteJoint};
pub use marginal::MarginalEstimate;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Keeps `ln(1 - tanh^2 + eps)` finite at saturation.
pub const SQUASH_EPS: f64 = 1e-6;

/// `0.5 * ln(2 pi)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
/// Entropy of a unit normal, `0.5 * ln(2 pi e)`.
pub const UNIT_NORMAL_ENTROPY: f64 = 1.418_938_533_204_672_7;

/// Diagonal Gaussian with log standard deviations clamped to
/// [`LOG_STD_MIN`, `LOG_STD_MAX`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    log_std: Vec<f64>,
}

/// A reparameterized draw pushed through `tanh`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedSample {
    pub action: Vec<f64>,
    pub pre_squash: Vec<f64>,
    pub log_prob: f64,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() || mean.is_empty() {
            return Err(invalid("mean and log_std dimensions differ"));
        }
        let log_std = log_std.into_iter().map(clamp_log_std).collect();
        Ok(Self { mean, log_std })
    }

    pub fn from_variance(mean: Vec<f64>, variance: &[f64]) -> Result<Self> {
        if variance.iter().any(|&v| !(v > 0.0)) {
            return Err(invalid("variance must be positive"));
        }
        Self::new(mean, variance.iter().map(|v| 0.5 * v.ln()).collect())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| (2.0 * l).exp()).collect()
    }

    /// Differential entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|l| l + UNIT_NORMAL_ENTROPY).sum()
    }

    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(invalid("point dimension mismatch"));
        }
        Ok(self
            .mean
            .iter()
            .zip(&self.log_std)
            .zip(x)
            .map(|((m, l), x)| {
                let z = (x - m) / l.exp();
                -0.5 * z * z - l - HALF_LN_2PI
            })
            .sum())
    }

    /// `tanh(mean + std * noise)` with its change-of-variables log density.
    pub fn sample_squashed(&self, noise: &[f64]) -> Result<SquashedSample> {
        if noise.len() != self.dim() {
            return Err(invalid("noise dimension mismatch"));
        }
        let pre_squash: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.log_std)
            .zip(noise)
            .map(|((m, l), e)| m + l.exp() * e)
            .collect();
        let base: f64 = self
            .log_std
            .iter()
            .zip(noise)
            .map(|(l, e)| -0.5 * e * e - l - HALF_LN_2PI)
            .sum();
        let log_prob = base - squash_correction(&pre_squash);
        let action = pre_squash.iter().map(|u| u.tanh()).collect();
        Ok(SquashedSample {
            action,
            pre_squash,
            log_prob,
        })
    }

    /// The distribution's mode after squashing.
    pub fn squashed_mean(&self) -> Vec<f64> {
        self.mean.iter().map(|m| m.tanh()).collect()
    }
}

pub fn clamp_log_std(l: f64) -> f64 {
    l.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

/// `sum_i ln(1 - tanh(u_i)^2 + eps)`, the log-Jacobian of `tanh`.
pub fn squash_correction(pre_squash: &[f64]) -> f64 {
    pre_squash
        .iter()
        .map(|u| {
            let t = u.tanh();
            (1.0 - t * t + SQUASH_EPS).ln()
        })
        .sum()
}

/// Derivative of `-ln(1 - tanh(u)^2 + eps)` with respect to `u`.
pub fn neg_squash_correction_grad(u: f64) -> f64 {
    let t = u.tanh();
    let s = 1.0 - t * t;
    2.0 * t * s / (s + SQUASH_EPS)
}

/// Single-sample mutual-information contribution, `log pi(a|s) - log pi_marg(a)`.
///
/// Individual samples may be negative; only the expectation is bounded below by zero.
pub fn mi_sample_estimate(policy_log_prob: f64, marginal_log_prob: f64) -> f64 {
    policy_log_prob - marginal_log_prob
}

/// Closed-form `KL(p || q)` between diagonal Gaussians.
pub fn gaussian_kl(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(invalid("dimension mismatch"));
    }
    Ok((0..p.dim())
        .map(|i| {
            let (vp, vq) = ((2.0 * p.log_std[i]).exp(), (2.0 * q.log_std[i]).exp());
            let d = p.mean[i] - q.mean[i];
            q.log_std[i] - p.log_std[i] + (vp + d * d) / (2.0 * vq) - 0.5
        })
        .sum())
}
