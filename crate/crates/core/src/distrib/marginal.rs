use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{squash_correction, DiagGaussian, HALF_LN_2PI, UNIT_NORMAL_ENTROPY};
use crate::error::{invalid, Error, Result};

/// Running Gaussian-admixture estimate of the stationary action marginal,
/// kept in pre-squash space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEstimate {
    mean: Vec<f64>,
    variance: Vec<f64>,
    learning_rate: f64,
    initialized: bool,
}

impl MarginalEstimate {
    pub fn new(dim: usize, learning_rate: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("marginal dimension must be positive"));
        }
        check_rate(learning_rate)?;
        Ok(Self {
            mean: vec![0.0; dim],
            variance: vec![0.0; dim],
            learning_rate,
            initialized: false,
        })
    }

    /// An already-initialized estimate, mostly for tests.
    pub fn with_moments(mean: Vec<f64>, variance: Vec<f64>, learning_rate: f64) -> Result<Self> {
        if mean.len() != variance.len() || variance.iter().any(|&v| !(v > 0.0)) {
            return Err(invalid("marginal moments malformed"));
        }
        check_rate(learning_rate)?;
        Ok(Self {
            mean,
            variance,
            learning_rate,
            initialized: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Folds the policy's Gaussian at the current state into the estimate.
    pub fn update(&mut self, d: &DiagGaussian) -> Result<()> {
        self.update_with_rate(d, self.learning_rate)
    }

    pub fn update_with_rate(&mut self, d: &DiagGaussian, rate: f64) -> Result<()> {
        self.update_moments(d.mean(), &d.variance(), rate)
    }

    /// Mixes `(mean, variance)` in with weight `rate`:
    ///
    /// ```text
    /// mean'     = a m + (1 - a) mean
    /// variance' = a v + (1 - a) variance + (a m^2 + (1 - a) mean^2) - mean'^2
    /// ```
    ///
    /// The first call on an uninitialized estimate copies the moments.
    pub fn update_moments(&mut self, mean: &[f64], variance: &[f64], rate: f64) -> Result<()> {
        check_rate(rate)?;
        if mean.len() != self.dim() || variance.len() != self.dim() {
            return Err(invalid("marginal update dimension mismatch"));
        }
        if variance.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(invalid("incoming variance must be positive"));
        }
        if !self.initialized {
            self.mean.copy_from_slice(mean);
            self.variance.copy_from_slice(variance);
            self.initialized = true;
            return Ok(());
        }
        for i in 0..self.dim() {
            let (m_old, m_in) = (self.mean[i], mean[i]);
            let m_new = rate * m_in + (1.0 - rate) * m_old;
            // (a m^2 + (1-a) mean^2) - mean'^2 == a (1-a) (m - mean)^2, without cancellation.
            let spread = rate * (1.0 - rate) * (m_in - m_old) * (m_in - m_old);
            self.variance[i] = rate * variance[i] + (1.0 - rate) * self.variance[i] + spread;
            self.mean[i] = m_new;
        }
        Ok(())
    }

    fn require_init(&self) -> Result<()> {
        if self.initialized {
            Ok(())
        } else {
            Err(Error::Precondition(
                "marginal estimate is uninitialized".into(),
            ))
        }
    }

    /// Gaussian log density at a pre-squash point, without the tanh term.
    pub fn log_density(&self, pre_squash: &[f64]) -> Result<f64> {
        self.require_init()?;
        if pre_squash.len() != self.dim() {
            return Err(invalid("point dimension mismatch"));
        }
        Ok(self
            .mean
            .iter()
            .zip(&self.variance)
            .zip(pre_squash)
            .map(|((m, v), u)| -0.5 * (u - m) * (u - m) / v - 0.5 * v.ln() - HALF_LN_2PI)
            .sum())
    }

    /// Log density of the squashed action, with the same tanh correction as
    /// [`DiagGaussian::sample_squashed`].
    pub fn log_prob(&self, pre_squash: &[f64]) -> Result<f64> {
        Ok(self.log_density(pre_squash)? - squash_correction(pre_squash))
    }

    pub fn entropy(&self) -> Result<f64> {
        self.require_init()?;
        Ok(self
            .variance
            .iter()
            .map(|v| 0.5 * v.ln() + UNIT_NORMAL_ENTROPY)
            .sum())
    }

    pub fn as_gaussian(&self) -> Result<DiagGaussian> {
        self.require_init()?;
        DiagGaussian::from_variance(self.mean.clone(), &self.variance)
    }

    /// Draws a pre-squash point from `N(mean, variance)`.
    pub fn sample_pre_squash<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        self.require_init()?;
        Ok(self
            .mean
            .iter()
            .zip(&self.variance)
            .map(|(m, v)| {
                let e: f64 = rng.sample(StandardNormal);
                m + v.sqrt() * e
            })
            .collect())
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rate) {
        Ok(())
    } else {
        Err(invalid(format!(
            "marginal learning rate {rate} outside [0, 1]"
        )))
    }
}
