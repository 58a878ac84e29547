//! Environments: the continuous N-chain and a randomizable pendulum.
//!
//! Agents act in `[-1, 1]^k`; each environment rescales internally.
//! Both environments are bit-deterministic given their parameters, seed
//! and action sequence.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed;

/// Observation plus episode bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub observation: Vec<f64>,
    pub step_index: usize,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: EnvState,
    pub reward: f64,
    /// Reached a terminal state (no bootstrapping past it).
    pub terminated: bool,
    /// Cut off by the episode step cap.
    pub truncated: bool,
}

pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self) -> EnvState;
    fn step(&mut self, action: &[f64]) -> Result<Step>;
    fn state(&self) -> EnvState;
}

fn check_action(action: &[f64], dim: usize) -> Result<()> {
    if action.len() != dim {
        return Err(invalid(format!(
            "expected {dim}-dimensional action, got {}",
            action.len()
        )));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(invalid("non-finite action"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Continuous N-chain

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NChainParams {
    pub n_states: usize,
    /// Hidden target action in `(0, 1)` for each non-terminal state.
    pub hidden_values: Vec<f64>,
    pub beta_a: f64,
    pub beta_b: f64,
    /// Decay rate `c` of the advance kernel `exp(-c |x - H|)`.
    pub sharpness: f64,
    pub max_episode_steps: usize,
}

impl Default for NChainParams {
    fn default() -> Self {
        Self {
            n_states: 5,
            hidden_values: vec![0.25, 0.35, 0.2, 0.3],
            beta_a: 10.0,
            beta_b: 25.0,
            sharpness: 10.0,
            max_episode_steps: 200,
        }
    }
}

impl NChainParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_states < 2 {
            return Err(invalid("n-chain needs at least two states"));
        }
        if self.hidden_values.len() != self.n_states - 1 {
            return Err(invalid(format!(
                "n-chain with {} states needs {} hidden values, got {}",
                self.n_states,
                self.n_states - 1,
                self.hidden_values.len()
            )));
        }
        if self.hidden_values.iter().any(|&h| !(h > 0.0 && h < 1.0)) {
            return Err(invalid("hidden values must lie in (0, 1)"));
        }
        if !(self.beta_a > 0.0 && self.beta_b > 0.0 && self.sharpness > 0.0)
            || self.max_episode_steps == 0
        {
            return Err(invalid("n-chain shape parameters must be positive"));
        }
        Ok(())
    }
}

/// Probability of advancing when taking agent action `action` in `[-1, 1]`
/// against hidden value `hidden` in `[0, 1]`.
pub fn advance_probability(action: f64, hidden: f64, sharpness: f64) -> f64 {
    let x = (action.clamp(-1.0, 1.0) + 1.0) / 2.0;
    (-sharpness * (x - hidden).abs()).exp()
}

#[derive(Debug, Clone)]
pub struct NChain {
    params: NChainParams,
    position: usize,
    step_index: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl NChain {
    pub fn new(params: NChainParams, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            position: 0,
            step_index: 0,
            done: false,
            rng: seed::rng(seed),
        })
    }

    pub fn params(&self) -> &NChainParams {
        &self.params
    }

    pub fn position(&self) -> usize {
        self.position
    }

    fn observation(&self) -> Vec<f64> {
        let mut obs = vec![0.0; self.params.n_states];
        obs[self.position] = 1.0;
        obs
    }
}

impl Environment for NChain {
    fn observation_dim(&self) -> usize {
        self.params.n_states
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self) -> EnvState {
        self.position = 0;
        self.step_index = 0;
        self.done = false;
        self.state()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        if self.done {
            return Err(Error::ContractViolation(
                "step called on a finished n-chain episode".into(),
            ));
        }
        check_action(action, 1)?;
        let p = advance_probability(
            action[0],
            self.params.hidden_values[self.position],
            self.params.sharpness,
        );
        let u: f64 = self.rng.random();
        if u < p {
            self.position += 1;
        }
        let terminated = self.position == self.params.n_states - 1;
        let reward = if terminated { 0.0 } else { -1.0 };
        self.step_index += 1;
        let truncated = !terminated && self.step_index >= self.params.max_episode_steps;
        self.done = terminated || truncated;
        Ok(Step {
            state: self.state(),
            reward,
            terminated,
            truncated,
        })
    }

    fn state(&self) -> EnvState {
        EnvState {
            observation: self.observation(),
            step_index: self.step_index,
            done: self.done,
        }
    }
}

// ---------------------------------------------------------------------------
// Pendulum swing-up

pub const PENDULUM_MAX_SPEED: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub max_torque: f64,
    pub dt: f64,
    pub max_episode_steps: usize,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 9.8,
            max_torque: 2.0,
            dt: 0.05,
            max_episode_steps: 200,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.mass,
            self.length,
            self.gravity,
            self.max_torque,
            self.dt,
        ];
        if positive.iter().any(|&x| !(x > 0.0 && x.is_finite())) || self.max_episode_steps == 0 {
            return Err(invalid("pendulum parameters must be strictly positive"));
        }
        Ok(())
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Rigid pendulum with `theta = 0` upright; torque-limited swing-up task.
#[derive(Debug, Clone)]
pub struct Pendulum {
    params: PendulumParams,
    theta: f64,
    theta_dot: f64,
    step_index: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl Pendulum {
    pub fn new(params: PendulumParams, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            theta: PI,
            theta_dot: 0.0,
            step_index: 0,
            done: false,
            rng: seed::rng(seed),
        })
    }

    pub fn params(&self) -> &PendulumParams {
        &self.params
    }

    pub fn angle(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    /// Places the pendulum at `(theta, theta_dot)` at the start of an episode.
    pub fn set_physical_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.step_index = 0;
        self.done = false;
    }
}

impl Environment for Pendulum {
    fn observation_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self) -> EnvState {
        let theta = self.rng.random_range(-PI..PI);
        let theta_dot = self.rng.random_range(-1.0..1.0);
        self.set_physical_state(theta, theta_dot);
        self.state()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        if self.done {
            return Err(Error::ContractViolation(
                "step called on a finished pendulum episode".into(),
            ));
        }
        check_action(action, 1)?;
        let p = &self.params;
        let u = action[0].clamp(-1.0, 1.0) * p.max_torque;
        let th = wrap_angle(self.theta);
        let reward = -(th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u);
        let accel = 3.0 * p.gravity / (2.0 * p.length) * self.theta.sin()
            + 3.0 / (p.mass * p.length * p.length) * u;
        self.theta_dot =
            (self.theta_dot + accel * p.dt).clamp(-PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED);
        self.theta += self.theta_dot * p.dt;
        self.step_index += 1;
        let truncated = self.step_index >= p.max_episode_steps;
        self.done = truncated;
        Ok(Step {
            state: self.state(),
            reward,
            terminated: false,
            truncated,
        })
    }

    fn state(&self) -> EnvState {
        EnvState {
            observation: vec![self.theta.cos(), self.theta.sin(), self.theta_dot],
            step_index: self.step_index,
            done: self.done,
        }
    }
}

// ---------------------------------------------------------------------------
// Parameters, dispatch and resampling

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Nchain,
    Pendulum,
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EnvKind::Nchain => "nchain",
            EnvKind::Pendulum => "pendulum",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvParams {
    Nchain(NChainParams),
    Pendulum(PendulumParams),
}

impl EnvParams {
    pub fn kind(&self) -> EnvKind {
        match self {
            EnvParams::Nchain(_) => EnvKind::Nchain,
            EnvParams::Pendulum(_) => EnvKind::Pendulum,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvParams::Nchain(p) => p.validate(),
            EnvParams::Pendulum(p) => p.validate(),
        }
    }

    /// Names accepted by [`ResampleSpec`] for this environment.
    pub fn resamplable(&self) -> &'static [&'static str] {
        match self {
            EnvParams::Nchain(_) => &["hidden_values"],
            EnvParams::Pendulum(_) => &["mass", "length", "gravity", "max_torque", "dt"],
        }
    }

    fn values_mut(&mut self, name: &str) -> Option<Vec<&mut f64>> {
        match (self, name) {
            (EnvParams::Nchain(p), "hidden_values") => Some(p.hidden_values.iter_mut().collect()),
            (EnvParams::Pendulum(p), "mass") => Some(vec![&mut p.mass]),
            (EnvParams::Pendulum(p), "length") => Some(vec![&mut p.length]),
            (EnvParams::Pendulum(p), "gravity") => Some(vec![&mut p.gravity]),
            (EnvParams::Pendulum(p), "max_torque") => Some(vec![&mut p.max_torque]),
            (EnvParams::Pendulum(p), "dt") => Some(vec![&mut p.dt]),
            _ => None,
        }
    }

    /// Current values of a resamplable parameter.
    pub fn values(&self, name: &str) -> Option<Vec<f64>> {
        self.clone()
            .values_mut(name)
            .map(|v| v.into_iter().map(|x| *x).collect())
    }

    pub fn observation_dim(&self) -> usize {
        match self {
            EnvParams::Nchain(p) => p.n_states,
            EnvParams::Pendulum(_) => 3,
        }
    }

    pub fn action_dim(&self) -> usize {
        1
    }
}

/// Sampling rule for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Regime {
    Fixed,
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Uniform over `[low.0, low.1) ∪ [high.0, high.1)`, bands weighted by width.
    Disjoint {
        low: (f64, f64),
        high: (f64, f64),
    },
    Beta {
        a: f64,
        b: f64,
    },
}

/// Per-parameter resampling rules. With `relative = true`, uniform and
/// disjoint bounds are multiples of each parameter's nominal value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleSpec {
    pub relative: bool,
    pub rules: BTreeMap<String, Regime>,
}

impl ResampleSpec {
    pub fn new(relative: bool) -> Self {
        Self {
            relative,
            rules: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, regime: Regime) -> Self {
        self.rules.insert(name.to_string(), regime);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.rules.values().all(|r| *r == Regime::Fixed)
    }

    /// Hidden values drawn from the configured Beta prior.
    pub fn nchain_beta(params: &NChainParams) -> Self {
        Self::new(false).with(
            "hidden_values",
            Regime::Beta {
                a: params.beta_a,
                b: params.beta_b,
            },
        )
    }
}

impl Regime {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Regime::Fixed => true,
            Regime::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Regime::Disjoint { low, high } => {
                low.0.is_finite()
                    && high.1.is_finite()
                    && low.0 < low.1
                    && low.1 <= high.0
                    && high.0 < high.1
            }
            Regime::Beta { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("malformed sampling regime {self:?}")))
        }
    }

    fn scaled(&self, nominal: f64) -> Regime {
        match *self {
            Regime::Uniform { lo, hi } => Regime::Uniform {
                lo: lo * nominal,
                hi: hi * nominal,
            },
            Regime::Disjoint { low, high } => Regime::Disjoint {
                low: (low.0 * nominal, low.1 * nominal),
                high: (high.0 * nominal, high.1 * nominal),
            },
            ref r => r.clone(),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, current: f64, rng: &mut R) -> Result<f64> {
        Ok(match *self {
            Regime::Fixed => current,
            Regime::Uniform { lo, hi } => rng.random_range(lo..hi),
            Regime::Disjoint { low, high } => {
                let (w_low, w_high) = (low.1 - low.0, high.1 - high.0);
                let pick: f64 = rng.random_range(0.0..w_low + w_high);
                if pick < w_low {
                    rng.random_range(low.0..low.1)
                } else {
                    rng.random_range(high.0..high.1)
                }
            }
            Regime::Beta { a, b } => {
                let beta = Beta::new(a, b).map_err(|e| invalid(e.to_string()))?;
                beta.sample(rng)
            }
        })
    }
}

/// Redraws each parameter named in `spec`; untouched parameters are kept.
pub fn resample(params: &EnvParams, spec: &ResampleSpec, seed: u64) -> Result<EnvParams> {
    let allowed = params.resamplable();
    for (name, regime) in &spec.rules {
        if !allowed.contains(&name.as_str()) {
            return Err(invalid(format!(
                "{} has no resamplable parameter `{name}`",
                params.kind()
            )));
        }
        regime.validate()?;
    }
    let mut rng = seed::rng(seed);
    let mut out = params.clone();
    for (name, regime) in &spec.rules {
        for v in out.values_mut(name).expect("checked above") {
            let rule = if spec.relative {
                regime.scaled(*v)
            } else {
                regime.clone()
            };
            rule.validate()?;
            *v = rule.sample(*v, &mut rng)?;
        }
    }
    out.validate()
        .map_err(|e| invalid(format!("resampled parameters out of range: {e}")))?;
    Ok(out)
}

/// Either environment behind one interface.
#[derive(Debug, Clone)]
pub enum Env {
    Nchain(NChain),
    Pendulum(Pendulum),
}

impl Env {
    pub fn new(params: &EnvParams, seed: u64) -> Result<Self> {
        Ok(match params {
            EnvParams::Nchain(p) => Env::Nchain(NChain::new(p.clone(), seed)?),
            EnvParams::Pendulum(p) => Env::Pendulum(Pendulum::new(p.clone(), seed)?),
        })
    }

    pub fn params(&self) -> EnvParams {
        match self {
            Env::Nchain(e) => EnvParams::Nchain(e.params.clone()),
            Env::Pendulum(e) => EnvParams::Pendulum(e.params.clone()),
        }
    }

    /// Swaps physical parameters; the episode in progress must be reset by the caller.
    pub fn set_params(&mut self, params: &EnvParams) -> Result<()> {
        params.validate()?;
        match (self, params) {
            (Env::Nchain(e), EnvParams::Nchain(p)) if p.n_states == e.params.n_states => {
                e.params = p.clone()
            }
            (Env::Pendulum(e), EnvParams::Pendulum(p)) => e.params = p.clone(),
            _ => return Err(invalid("parameters belong to a different environment")),
        }
        Ok(())
    }

    fn inner(&mut self) -> &mut dyn Environment {
        match self {
            Env::Nchain(e) => e,
            Env::Pendulum(e) => e,
        }
    }

    fn inner_ref(&self) -> &dyn Environment {
        match self {
            Env::Nchain(e) => e,
            Env::Pendulum(e) => e,
        }
    }
}

impl Environment for Env {
    fn observation_dim(&self) -> usize {
        self.inner_ref().observation_dim()
    }

    fn action_dim(&self) -> usize {
        self.inner_ref().action_dim()
    }

    fn reset(&mut self) -> EnvState {
        self.inner().reset()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        self.inner().step(action)
    }

    fn state(&self) -> EnvState {
        self.inner_ref().state()
    }
}
