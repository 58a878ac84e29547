use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::summary::mean_std;
use crate::agents::{ActMode, Agent};
use crate::envs::{resample, Env, EnvParams, Environment, Regime, ResampleSpec};
use crate::error::{invalid, Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalRegime {
    TrainFixed,
    Random,
    Extreme,
}

impl EvalRegime {
    pub const ALL: [EvalRegime; 3] = [
        EvalRegime::TrainFixed,
        EvalRegime::Random,
        EvalRegime::Extreme,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EvalRegime::TrainFixed => "train-fixed",
            EvalRegime::Random => "random",
            EvalRegime::Extreme => "extreme",
        }
    }
}

impl fmt::Display for EvalRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for EvalRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EvalRegime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| {
                invalid(format!(
                    "unknown regime `{s}` (expected train-fixed, random or extreme)"
                ))
            })
    }
}

const RANDOM_BAND: Regime = Regime::Uniform { lo: 0.95, hi: 1.05 };
const EXTREME_BANDS: Regime = Regime::Disjoint {
    low: (0.90, 0.95),
    high: (1.05, 1.10),
};

/// Default sampling rules per environment: pendulum mass, gravity and
/// torque limit within 95-105% of nominal (random) or in 90-95% / 105-110%
/// (extreme); N-chain hidden values from the Beta prior (random) or the
/// relative disjoint bands (extreme).
pub fn default_regime(env: &EnvParams, regime: EvalRegime) -> ResampleSpec {
    match (env, regime) {
        (_, EvalRegime::TrainFixed) => ResampleSpec::default(),
        (EnvParams::Nchain(p), EvalRegime::Random) => ResampleSpec::nchain_beta(p),
        (EnvParams::Nchain(_), EvalRegime::Extreme) => {
            ResampleSpec::new(true).with("hidden_values", EXTREME_BANDS)
        }
        (EnvParams::Pendulum(_), r) => {
            let band = if r == EvalRegime::Random {
                RANDOM_BAND
            } else {
                EXTREME_BANDS
            };
            ResampleSpec::new(true)
                .with("mass", band.clone())
                .with("gravity", band.clone())
                .with("max_torque", band)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub regime: EvalRegime,
    pub resample: usize,
    pub episode: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub length: usize,
}

/// Deterministic-policy returns under one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct GenEvalResult {
    pub regime: EvalRegime,
    pub mean: f64,
    pub std: f64,
    pub resamples: usize,
    pub episodes: Vec<EvalEpisode>,
    /// Parameters drawn for each resample, for auditing.
    pub params: Vec<EnvParams>,
}

impl GenEvalResult {
    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.episode_return).collect()
    }

    /// Pools episodes of several results (e.g. seed replicates) of one regime.
    pub fn pooled(results: &[GenEvalResult]) -> Result<GenEvalResult> {
        let first = results.first().ok_or_else(|| invalid("nothing to pool"))?;
        if results.iter().any(|r| r.regime != first.regime) {
            return Err(invalid("cannot pool different regimes"));
        }
        let episodes: Vec<EvalEpisode> = results
            .iter()
            .flat_map(|r| r.episodes.iter().cloned())
            .collect();
        let (mean, std) = mean_std(
            &episodes
                .iter()
                .map(|e| e.episode_return)
                .collect::<Vec<_>>(),
        );
        Ok(GenEvalResult {
            regime: first.regime,
            mean,
            std,
            resamples: results.iter().map(|r| r.resamples).sum(),
            episodes,
            params: results
                .iter()
                .flat_map(|r| r.params.iter().cloned())
                .collect(),
        })
    }
}

/// Parameters of evaluation draw `index`; train-fixed always returns `train_params`.
pub fn regime_params(
    train_params: &EnvParams,
    regime_spec: &ResampleSpec,
    regime: EvalRegime,
    index: usize,
    seed: u64,
) -> Result<EnvParams> {
    match regime {
        EvalRegime::TrainFixed => Ok(train_params.clone()),
        _ => resample(
            train_params,
            regime_spec,
            seed::derive(seed, seed::tags::EVAL_RESAMPLE, index as u64),
        ),
    }
}

/// Runs `episodes` deterministic episodes on each of `resamples` parameter
/// draws around `train_params`. The agent is cloned, never modified.
///
/// Draw `i` uses the same parameters and episode seeds for every agent
/// evaluated with the same `seed`.
pub fn run_generalization_eval(
    agent: &Agent,
    train_params: &EnvParams,
    regime_spec: &ResampleSpec,
    regime: EvalRegime,
    resamples: usize,
    episodes: usize,
    seed: u64,
) -> Result<GenEvalResult> {
    if agent.obs_dim() != train_params.observation_dim()
        || agent.act_dim() != train_params.action_dim()
    {
        return Err(invalid(
            "checkpoint does not match the environment's observation/action shape",
        ));
    }
    if resamples == 0 || episodes == 0 {
        return Err(invalid(
            "evaluation needs at least one resample and one episode",
        ));
    }
    let mut agent = agent.clone();
    let mut out = Vec::with_capacity(resamples * episodes);
    let mut params = Vec::with_capacity(resamples);
    for i in 0..resamples {
        let p = regime_params(train_params, regime_spec, regime, i, seed)?;
        let mut env = Env::new(&p, seed::derive(seed, seed::tags::EVAL_EPISODE, i as u64))?;
        for e in 0..episodes {
            let mut state = env.reset();
            let (mut ret, mut len) = (0.0, 0);
            while !state.done {
                let a = agent.act(&state.observation, ActMode::Deterministic)?;
                let step = env.step(&a.action)?;
                ret += step.reward;
                len += 1;
                state = step.state;
            }
            out.push(EvalEpisode {
                regime,
                resample: i,
                episode: e,
                episode_return: ret,
                length: len,
            });
        }
        params.push(p);
    }
    let (mean, std) = mean_std(&out.iter().map(|e| e.episode_return).collect::<Vec<_>>());
    Ok(GenEvalResult {
        regime,
        mean,
        std,
        resamples,
        episodes: out,
        params,
    })
}
