//! CLAC, SAC and MIRL learners on a shared actor-critic scaffold.
//!
//! All three keep a state-value network with a Polyak target, two Q
//! networks and a tanh-squashed Gaussian policy. They differ only in the
//! penalty applied to sampled actions (see [`Regularizer`]) and in how
//! MIRL explores.

mod checkpoint;
mod config;
mod control;
pub mod losses;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use config::{AgentConfig, Algorithm};
pub use control::{BetaController, MirlSchedule, BETA_MAX, BETA_MIN};
pub use losses::{compute_value_target, Regularizer};

use crate::distrib::{DiagGaussian, MarginalEstimate};
use crate::envs::{EnvState, Environment, Step};
use crate::error::{invalid, Error, Result};
use crate::ndiff::{polyak_update, Adam, AdamConfig, Mlp, Tensor};
use crate::replay::{ReplayBuffer, Transition};
use crate::seed;

/// Value, target value, twin Q and policy networks with their optimizers.
#[derive(Debug, Clone)]
pub struct NetworkSet {
    pub value: Mlp,
    pub value_target: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    /// Outputs `[mean, log_std]` concatenated.
    pub policy: Mlp,
    pub opt_value: Adam,
    pub opt_q1: Adam,
    pub opt_q2: Adam,
    pub opt_policy: Adam,
}

impl NetworkSet {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        cfg: &AgentConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let sizes = |input: usize, output: usize| {
            let mut s = vec![input];
            s.extend_from_slice(&cfg.hidden);
            s.push(output);
            s
        };
        let value = Mlp::new(&sizes(obs_dim, 1), rng)?;
        let q1 = Mlp::new(&sizes(obs_dim + act_dim, 1), rng)?;
        let q2 = Mlp::new(&sizes(obs_dim + act_dim, 1), rng)?;
        let policy = Mlp::new(&sizes(obs_dim, 2 * act_dim), rng)?;
        Ok(Self {
            opt_value: Adam::new(&value, AdamConfig::with_learning_rate(cfg.lr_value)),
            opt_q1: Adam::new(&q1, AdamConfig::with_learning_rate(cfg.lr_q)),
            opt_q2: Adam::new(&q2, AdamConfig::with_learning_rate(cfg.lr_q)),
            opt_policy: Adam::new(&policy, AdamConfig::with_learning_rate(cfg.lr_policy)),
            value_target: value.clone(),
            value,
            q1,
            q2,
            policy,
        })
    }

    /// Networks by checkpoint name.
    pub fn named(&self) -> [(&'static str, &Mlp, Option<&Adam>); 5] {
        [
            ("value", &self.value, Some(&self.opt_value)),
            ("value_target", &self.value_target, None),
            ("q1", &self.q1, Some(&self.opt_q1)),
            ("q2", &self.q2, Some(&self.opt_q2)),
            ("policy", &self.policy, Some(&self.opt_policy)),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActMode {
    Stochastic,
    Deterministic,
    /// With probability `epsilon` a squashed draw from the marginal, else the mean action.
    Mirl(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub action: Vec<f64>,
    pub pre_squash: Vec<f64>,
    /// Policy distribution at the queried state.
    pub dist: DiagGaussian,
}

/// Averages over the gradient steps taken after one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateMetrics {
    pub value_loss: f64,
    /// Mean of the two critics' losses.
    pub q_loss: f64,
    pub policy_loss: f64,
    pub mean_mi: Option<f64>,
    pub mean_entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: Step,
    pub action: Vec<f64>,
    pub update: Option<UpdateMetrics>,
    /// Coefficient in force after this step.
    pub beta: f64,
}

/// A learner with its optimizer state, marginal estimate and random streams.
#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    obs_dim: usize,
    act_dim: usize,
    nets: NetworkSet,
    marginal: MarginalEstimate,
    beta_ctrl: Option<BetaController>,
    rng: ChaCha8Rng,
    explore_rng: ChaCha8Rng,
    env_steps: u64,
    grad_steps: u64,
    warned_uninitialized: bool,
}

impl Agent {
    /// Network initialization, sampling noise and MIRL exploration draw from
    /// separate streams derived from `seed`.
    pub fn new(config: AgentConfig, obs_dim: usize, act_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if obs_dim == 0 || act_dim == 0 {
            return Err(invalid(
                "observation and action dimensions must be positive",
            ));
        }
        let nets = NetworkSet::new(
            obs_dim,
            act_dim,
            &config,
            &mut seed::rng(seed::derive(seed, seed::tags::INIT, 0)),
        )?;
        let beta_ctrl = config
            .auto_beta
            .map(|target| BetaController::new(config.beta, target, config.beta_lr))
            .transpose()?;
        Ok(Self {
            marginal: MarginalEstimate::new(act_dim, config.marginal_lr)?,
            rng: seed::rng(seed::derive(seed, seed::tags::AGENT, 0)),
            explore_rng: seed::rng(seed::derive(seed, seed::tags::EXPLORE, 0)),
            config,
            obs_dim,
            act_dim,
            nets,
            beta_ctrl,
            env_steps: 0,
            grad_steps: 0,
            warned_uninitialized: false,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn nets(&self) -> &NetworkSet {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut NetworkSet {
        &mut self.nets
    }

    pub fn marginal(&self) -> &MarginalEstimate {
        &self.marginal
    }

    pub fn marginal_mut(&mut self) -> &mut MarginalEstimate {
        &mut self.marginal
    }

    pub fn beta_controller(&self) -> Option<&BetaController> {
        self.beta_ctrl.as_ref()
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    pub fn mirl_schedule(&self) -> MirlSchedule {
        MirlSchedule {
            beta0: self.config.beta,
            epsilon0: self.config.mirl_epsilon,
            horizon: self.config.mirl_horizon,
        }
    }

    /// Coefficient currently applied by the objective.
    pub fn beta(&self) -> f64 {
        self.regularizer().coefficient()
    }

    pub fn regularizer(&self) -> Regularizer {
        match self.config.algorithm {
            Algorithm::Clac => Regularizer::Information(
                self.beta_ctrl
                    .as_ref()
                    .map_or(self.config.beta, |c| c.beta()),
            ),
            Algorithm::Mirl => Regularizer::Information(self.mirl_schedule().beta(self.env_steps)),
            Algorithm::Sac => Regularizer::Entropy(self.config.beta),
        }
    }

    /// Policy distribution at a single observation.
    pub fn policy_distribution(&self, observation: &[f64]) -> Result<DiagGaussian> {
        if observation.len() != self.obs_dim {
            return Err(invalid("observation dimension mismatch"));
        }
        let out = self.nets.policy.forward(&Tensor::row_vector(observation))?;
        losses::policy_head(out.row(0))
    }

    fn draw_noise(&mut self) -> Vec<f64> {
        losses::standard_normal(1, self.act_dim, &mut self.rng).into_data()
    }

    fn stochastic(&mut self, dist: DiagGaussian) -> Result<Action> {
        let eta = self.draw_noise();
        let s = dist.sample_squashed(&eta)?;
        Ok(Action {
            action: s.action,
            pre_squash: s.pre_squash,
            dist,
        })
    }

    /// Squashed draw from the marginal estimate, on the exploration stream.
    fn from_marginal(&mut self) -> Result<(Vec<f64>, Vec<f64>)> {
        let pre = self.marginal.sample_pre_squash(&mut self.explore_rng)?;
        Ok((pre.iter().map(|u| u.tanh()).collect(), pre))
    }

    pub fn act(&mut self, observation: &[f64], mode: ActMode) -> Result<Action> {
        let dist = self.policy_distribution(observation)?;
        match mode {
            ActMode::Stochastic => self.stochastic(dist),
            ActMode::Deterministic => Ok(Action {
                action: dist.squashed_mean(),
                pre_squash: dist.mean().to_vec(),
                dist,
            }),
            ActMode::Mirl(epsilon) => {
                if !self.marginal.is_initialized() {
                    if !self.warned_uninitialized {
                        log::warn!("marginal estimate not initialized; acting stochastically");
                        self.warned_uninitialized = true;
                    }
                    return self.stochastic(dist);
                }
                let u: f64 = self.explore_rng.random();
                if u < epsilon {
                    let (action, pre_squash) = self.from_marginal()?;
                    Ok(Action {
                        action,
                        pre_squash,
                        dist,
                    })
                } else {
                    Ok(Action {
                        action: dist.squashed_mean(),
                        pre_squash: dist.mean().to_vec(),
                        dist,
                    })
                }
            }
        }
    }

    /// Action taken while training. MIRL replaces the policy sample with a
    /// marginal draw with probability `epsilon(t)`; the policy noise is drawn
    /// either way so the main stream never depends on exploration.
    fn behaviour_action(&mut self, observation: &[f64]) -> Result<Action> {
        let dist = self.policy_distribution(observation)?;
        let mut a = self.stochastic(dist)?;
        if self.config.algorithm == Algorithm::Mirl && self.marginal.is_initialized() {
            let epsilon = self.mirl_schedule().epsilon(self.env_steps);
            if epsilon > 0.0 && self.explore_rng.random::<f64>() < epsilon {
                let (action, pre_squash) = self.from_marginal()?;
                a.action = action;
                a.pre_squash = pre_squash;
            }
        }
        Ok(a)
    }

    /// One environment step followed by `gradient_steps` updates.
    ///
    /// `state` must be the environment's current, unfinished state; the
    /// caller resets the environment when the returned step is done.
    pub fn train_step<E: Environment>(
        &mut self,
        env: &mut E,
        buffer: &mut ReplayBuffer,
        state: &EnvState,
    ) -> Result<StepOutcome> {
        let a = self.behaviour_action(&state.observation)?;
        let step = env.step(&a.action)?;
        self.marginal.update(&a.dist)?;
        buffer.push(Transition {
            state: state.observation.clone(),
            action: a.action.clone(),
            action_pre_squash: a.pre_squash.clone(),
            reward: step.reward,
            next_state: step.state.observation.clone(),
            done: step.terminated,
        })?;
        self.env_steps += 1;

        let mut acc: Option<(UpdateMetrics, usize, usize)> = None;
        for _ in 0..self.config.gradient_steps {
            let m = self.gradient_step(buffer)?;
            let (sum, n, n_mi) = acc.get_or_insert((
                UpdateMetrics {
                    value_loss: 0.0,
                    q_loss: 0.0,
                    policy_loss: 0.0,
                    mean_mi: None,
                    mean_entropy: 0.0,
                },
                0,
                0,
            ));
            sum.value_loss += m.value_loss;
            sum.q_loss += m.q_loss;
            sum.policy_loss += m.policy_loss;
            sum.mean_entropy += m.mean_entropy;
            if let Some(mi) = m.mean_mi {
                sum.mean_mi = Some(sum.mean_mi.unwrap_or(0.0) + mi);
                *n_mi += 1;
            }
            *n += 1;
        }
        let update = acc.map(|(s, n, n_mi)| {
            let n = n as f64;
            UpdateMetrics {
                value_loss: s.value_loss / n,
                q_loss: s.q_loss / n,
                policy_loss: s.policy_loss / n,
                mean_mi: s.mean_mi.map(|x| x / n_mi as f64),
                mean_entropy: s.mean_entropy / n,
            }
        });
        Ok(StepOutcome {
            step,
            action: a.action,
            update,
            beta: self.beta(),
        })
    }

    /// One minibatch update of every network.
    ///
    /// A single set of policy samples, drawn before any parameter moves,
    /// feeds both the value target and the policy objective.
    pub fn gradient_step(&mut self, buffer: &ReplayBuffer) -> Result<UpdateMetrics> {
        let batch = buffer.sample(self.config.batch_size, &mut self.rng)?;
        let noise = losses::standard_normal(batch.len(), self.act_dim, &mut self.rng);
        let reg = self.regularizer();
        let nets = &self.nets;

        let pass = losses::policy_pass(&nets.policy, &batch.states, &noise)?;
        let q_new = losses::q_pair(&nets.q1, &nets.q2, &batch.states, &pass.actions)?;
        let v_targets = losses::value_targets(&pass, &q_new, &self.marginal, reg)?;
        let (v_loss, v_grads) = losses::value_loss(&nets.value, &batch.states, &v_targets)?;

        let q_targets = losses::q_targets(
            &nets.value_target,
            &batch.next_states,
            &batch.rewards,
            &batch.dones,
            self.config.gamma,
        )?;
        let (q1_loss, q1_grads) =
            losses::q_loss(&nets.q1, &batch.states, &batch.actions, &q_targets)?;
        let (q2_loss, q2_grads) =
            losses::q_loss(&nets.q2, &batch.states, &batch.actions, &q_targets)?;

        let pl = losses::policy_loss_from(
            &nets.policy,
            &nets.q1,
            &nets.q2,
            &pass,
            &q_new,
            &self.marginal,
            reg,
        )?;

        let finite = [v_loss, q1_loss, q2_loss, pl.loss]
            .iter()
            .all(|x| x.is_finite())
            && v_grads.is_finite()
            && q1_grads.is_finite()
            && q2_grads.is_finite()
            && pl.grads.is_finite();
        if !finite {
            return Err(Error::Diverged(format!(
                "non-finite loss or gradient at update {}",
                self.grad_steps + 1
            )));
        }

        let nets = &mut self.nets;
        nets.opt_value.step(&mut nets.value, &v_grads)?;
        nets.opt_q1.step(&mut nets.q1, &q1_grads)?;
        nets.opt_q2.step(&mut nets.q2, &q2_grads)?;
        nets.opt_policy.step(&mut nets.policy, &pl.grads)?;
        self.grad_steps += 1;
        if self.grad_steps % self.config.target_update_interval as u64 == 0 {
            polyak_update(&mut nets.value_target, &nets.value, self.config.tau)?;
        }
        if let (Some(ctrl), Some(mi)) = (self.beta_ctrl.as_mut(), pl.mean_mi) {
            ctrl.update(mi);
        }
        Ok(UpdateMetrics {
            value_loss: v_loss,
            q_loss: 0.5 * (q1_loss + q2_loss),
            policy_loss: pl.loss,
            mean_mi: pl.mean_mi,
            mean_entropy: pl.mean_entropy,
        })
    }
}
