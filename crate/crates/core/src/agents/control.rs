use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const BETA_MIN: f64 = 1e-6;
pub const BETA_MAX: f64 = 1e3;

/// Dual ascent on the information coefficient toward a target capacity.
///
/// The coefficient lives in log space; each update moves `ln beta` by
/// `lr * (mi - target)`, so measured information above the target raises
/// the penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaController {
    log_beta: f64,
    target: f64,
    lr: f64,
}

impl BetaController {
    pub fn new(initial: f64, target: f64, lr: f64) -> Result<Self> {
        if !(initial >= 0.0 && target >= 0.0 && lr >= 0.0) {
            return Err(invalid("controller parameters must be nonnegative"));
        }
        Ok(Self {
            log_beta: initial.clamp(BETA_MIN, BETA_MAX).ln(),
            target,
            lr,
        })
    }

    pub fn beta(&self) -> f64 {
        self.log_beta.exp()
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn update(&mut self, mean_mi: f64) {
        if !mean_mi.is_finite() {
            return;
        }
        self.log_beta =
            (self.log_beta + self.lr * (mean_mi - self.target)).clamp(BETA_MIN.ln(), BETA_MAX.ln());
    }
}

/// Linear decay of MIRL's coefficient and exploration rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirlSchedule {
    pub beta0: f64,
    pub epsilon0: f64,
    /// Decay length; `None` holds both at their initial values.
    pub horizon: Option<u64>,
}

impl MirlSchedule {
    fn fraction_left(&self, step: u64) -> f64 {
        match self.horizon {
            None => 1.0,
            Some(0) => 0.0,
            Some(h) => (1.0 - step as f64 / h as f64).max(0.0),
        }
    }

    pub fn beta(&self, step: u64) -> f64 {
        self.beta0 * self.fraction_left(step)
    }

    pub fn epsilon(&self, step: u64) -> f64 {
        self.epsilon0 * self.fraction_left(step)
    }
}
