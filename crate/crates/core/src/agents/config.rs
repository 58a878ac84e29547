use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::replay::DEFAULT_CAPACITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Clac,
    Sac,
    Mirl,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Clac, Algorithm::Sac, Algorithm::Mirl];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Clac => "clac",
            Algorithm::Sac => "sac",
            Algorithm::Mirl => "mirl",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clac" => Ok(Algorithm::Clac),
            "sac" => Ok(Algorithm::Sac),
            "mirl" => Ok(Algorithm::Mirl),
            other => Err(invalid(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Hyperparameters for one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    /// Regularizer weight: the information coefficient for CLAC (initial
    /// value under `auto_beta`) and MIRL (value at step 0), the entropy
    /// temperature for SAC.
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub lr_value: f64,
    pub lr_q: f64,
    pub lr_policy: f64,
    /// Hidden layer widths shared by every network.
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub gradient_steps: usize,
    pub target_update_interval: usize,
    pub marginal_lr: f64,
    /// Target capacity in nats; enables the coefficient controller (CLAC only).
    pub auto_beta: Option<f64>,
    pub beta_lr: f64,
    pub mirl_epsilon: f64,
    /// Steps over which MIRL's coefficient and exploration rate decay to zero.
    /// Left unset, the harness fills in the experiment length.
    pub mirl_horizon: Option<u64>,
    pub buffer_capacity: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Clac,
            beta: 0.5,
            gamma: 0.99,
            tau: 0.005,
            lr_value: 3e-4,
            lr_q: 3e-4,
            lr_policy: 3e-4,
            hidden: vec![256, 256],
            batch_size: 256,
            gradient_steps: 1,
            target_update_interval: 1,
            marginal_lr: 1e-3,
            auto_beta: None,
            beta_lr: 1e-3,
            mirl_epsilon: 0.1,
            mirl_horizon: None,
            buffer_capacity: DEFAULT_CAPACITY,
        }
    }
}

impl AgentConfig {
    pub fn for_algorithm(algorithm: Algorithm, beta: f64) -> Self {
        Self {
            algorithm,
            beta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(invalid(format!("agent config: {msg}")));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail("coefficient must be finite and nonnegative");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail("tau must lie in [0, 1]");
        }
        if [self.lr_value, self.lr_q, self.lr_policy]
            .iter()
            .any(|&lr| !(lr > 0.0 && lr.is_finite()))
        {
            return fail("learning rates must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail("hidden widths must be positive");
        }
        if self.batch_size == 0 || self.target_update_interval == 0 || self.buffer_capacity == 0 {
            return fail("batch size, target interval and buffer capacity must be positive");
        }
        if !(self.marginal_lr > 0.0 && self.marginal_lr <= 1.0) {
            return fail("marginal_lr must lie in (0, 1]");
        }
        if let Some(c) = self.auto_beta {
            if self.algorithm != Algorithm::Clac {
                return fail("auto_beta applies to clac only");
            }
            if !(c >= 0.0 && c.is_finite()) {
                return fail("target capacity must be nonnegative");
            }
        }
        if !(self.beta_lr >= 0.0 && self.beta_lr.is_finite()) {
            return fail("beta_lr must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.mirl_epsilon) {
            return fail("mirl_epsilon must lie in [0, 1]");
        }
        Ok(())
    }
}
