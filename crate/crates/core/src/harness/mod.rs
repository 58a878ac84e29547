//! Experiment protocols: multi-seed training with phase-wise environment
//! resampling, generalization evaluation, aggregation, coefficient sweeps
//! and plots.

mod eval;
mod metrics;
mod plot;
mod summary;
mod sweep;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use eval::{
    default_regime, regime_params, run_generalization_eval, EvalEpisode, EvalRegime, GenEvalResult,
};
pub use metrics::{
    read_csv, read_metrics, write_csv, write_jsonl, write_metrics, MetricRow, MetricWriter,
};
pub use plot::{bars_svg, curves_svg, parse_svg_series, SvgSeries};
pub use summary::{aggregate, final_window, mean_std, PhaseSummary, SummaryRow};
pub use sweep::{coefficient_sweep, parse_grid, refine_grid, refined_sweep, SweepResult};

use crate::agents::{Agent, AgentConfig, Algorithm};
use crate::envs::{resample, Env, EnvParams, EnvState, Environment, NChainParams, ResampleSpec};
use crate::error::{invalid, Error, Result};
use crate::replay::ReplayBuffer;
use crate::seed;

/// Everything needed to reproduce a training experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub algorithms: Vec<Algorithm>,
    /// Per-algorithm coefficient; algorithms not listed use the agent template's.
    pub coefficients: BTreeMap<Algorithm, f64>,
    pub total_steps: u64,
    /// Phase length; each phase redraws the environment per `resample`.
    pub resample_interval: Option<u64>,
    pub n_agents: usize,
    pub eval_episodes: usize,
    pub eval_resamples: usize,
    /// Width of the env-step buckets in the summary table.
    pub summary_bucket: u64,
    pub base_seed: u64,
    pub env: EnvParams,
    pub resample: ResampleSpec,
    /// Generalization regimes; `None` selects the environment's default.
    pub random_regime: Option<ResampleSpec>,
    pub extreme_regime: Option<ResampleSpec>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let env = NChainParams::default();
        Self {
            algorithms: Algorithm::ALL.to_vec(),
            coefficients: BTreeMap::new(),
            total_steps: 50_000,
            resample_interval: Some(10_000),
            n_agents: 8,
            eval_episodes: 5,
            eval_resamples: 50,
            summary_bucket: 1_000,
            base_seed: 0,
            resample: ResampleSpec::nchain_beta(&env),
            env: EnvParams::Nchain(env),
            random_regime: None,
            extreme_regime: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.algorithms.is_empty() || self.n_agents == 0 || self.total_steps == 0 {
            return Err(invalid("experiment needs algorithms, agents and steps"));
        }
        if let Some(interval) = self.resample_interval {
            if interval == 0 || self.total_steps % interval != 0 {
                return Err(invalid(
                    "total_steps must be a positive multiple of resample_interval",
                ));
            }
        }
        if self.eval_episodes == 0 || self.eval_resamples == 0 || self.summary_bucket == 0 {
            return Err(invalid(
                "evaluation counts and summary bucket must be positive",
            ));
        }
        if self
            .coefficients
            .values()
            .any(|c| !(*c >= 0.0 && c.is_finite()))
        {
            return Err(invalid("coefficients must be nonnegative"));
        }
        // Surfaces malformed regimes before any training starts.
        resample(&self.env, &self.resample, 0)?;
        for regime in [EvalRegime::Random, EvalRegime::Extreme] {
            resample(&self.env, &self.regime_spec(regime), 0)?;
        }
        Ok(())
    }

    pub fn phase_len(&self) -> u64 {
        self.resample_interval.unwrap_or(self.total_steps)
    }

    pub fn n_phases(&self) -> usize {
        (self.total_steps / self.phase_len()) as usize
    }

    /// Sampling rules for an evaluation regime (empty for train-fixed).
    pub fn regime_spec(&self, regime: EvalRegime) -> ResampleSpec {
        let explicit = match regime {
            EvalRegime::TrainFixed => return ResampleSpec::default(),
            EvalRegime::Random => &self.random_regime,
            EvalRegime::Extreme => &self.extreme_regime,
        };
        explicit
            .clone()
            .unwrap_or_else(|| default_regime(&self.env, regime))
    }

    /// Environment parameters of `phase` for seed replicate `seed_index`;
    /// identical for every algorithm.
    pub fn phase_params(&self, seed_index: usize, phase: usize) -> Result<EnvParams> {
        if self.resample.is_empty() {
            return Ok(self.env.clone());
        }
        let stream = seed::derive(
            self.base_seed,
            seed::tags::PHASE_RESAMPLE,
            seed_index as u64,
        );
        resample(
            &self.env,
            &self.resample,
            seed::derive(stream, seed::tags::PHASE_RESAMPLE, phase as u64),
        )
    }

    /// Agent configuration of one run.
    pub fn agent_config(&self, template: &AgentConfig, algorithm: Algorithm) -> AgentConfig {
        let mut cfg = template.clone();
        cfg.algorithm = algorithm;
        cfg.beta = self
            .coefficients
            .get(&algorithm)
            .copied()
            .unwrap_or(template.beta);
        if algorithm != Algorithm::Clac {
            cfg.auto_beta = None;
        }
        if cfg.mirl_horizon.is_none() {
            cfg.mirl_horizon = Some(self.total_steps);
        }
        cfg
    }

    pub fn runs(&self) -> Vec<RunSpec> {
        self.algorithms
            .iter()
            .flat_map(|&algorithm| {
                (0..self.n_agents).map(move |i| RunSpec {
                    id: format!("{algorithm}-s{i:02}"),
                    algorithm,
                    seed_index: i,
                    agent_seed: seed::derive(self.base_seed, seed::tags::AGENT, i as u64),
                    env_seed: seed::derive(self.base_seed, seed::tags::ENV, i as u64),
                })
            })
            .collect()
    }
}

/// One (algorithm, seed replicate) pair; seeds are shared across algorithms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSpec {
    pub id: String,
    pub algorithm: Algorithm,
    pub seed_index: usize,
    pub agent_seed: u64,
    pub env_seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub spec: RunSpec,
    pub rows: Vec<MetricRow>,
    pub phase_params: Vec<EnvParams>,
    /// Final agent; `None` if the run diverged.
    pub agent: Option<Agent>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub runs: Vec<RunResult>,
}

impl TrainingReport {
    pub fn rows(&self) -> Vec<MetricRow> {
        self.runs
            .iter()
            .flat_map(|r| r.rows.iter().cloned())
            .collect()
    }

    pub fn diverged(&self) -> Vec<&RunResult> {
        self.runs.iter().filter(|r| r.error.is_some()).collect()
    }
}

/// Per-run output layout under an experiment directory.
pub fn run_dir(out: &Path, id: &str) -> PathBuf {
    out.join("runs").join(id)
}

#[derive(Default)]
struct EpisodeStats {
    ret: f64,
    len: usize,
    mi: (f64, usize),
    entropy: (f64, usize),
    losses: ([f64; 3], usize),
}

impl EpisodeStats {
    fn mean((sum, n): (f64, usize)) -> Option<f64> {
        (n > 0).then(|| sum / n as f64)
    }
}

/// Trains one run. Networks and replay persist across phases; an episode
/// cut short by a phase boundary is dropped from the metrics.
pub fn train_run(
    spec: &ExperimentSpec,
    template: &AgentConfig,
    run: &RunSpec,
    mut sink: Option<&mut MetricWriter>,
) -> RunResult {
    let mut rows = Vec::new();
    let mut phase_params = Vec::new();
    let mut agent_out = None;
    let outcome = (|| -> Result<()> {
        let cfg = spec.agent_config(template, run.algorithm);
        let first = spec.phase_params(run.seed_index, 0)?;
        let mut env = Env::new(&first, run.env_seed)?;
        let mut agent = Agent::new(
            cfg.clone(),
            env.observation_dim(),
            env.action_dim(),
            run.agent_seed,
        )?;
        let mut buffer =
            ReplayBuffer::new(cfg.buffer_capacity, env.observation_dim(), env.action_dim())?;
        let phase_len = spec.phase_len();
        for phase in 0..spec.n_phases() {
            let params = if phase == 0 {
                first.clone()
            } else {
                spec.phase_params(run.seed_index, phase)?
            };
            env.set_params(&params)?;
            phase_params.push(params);
            let mut state: EnvState = env.reset();
            let mut ep = EpisodeStats::default();
            for _ in 0..phase_len {
                let out = agent.train_step(&mut env, &mut buffer, &state)?;
                ep.ret += out.step.reward;
                ep.len += 1;
                if let Some(u) = out.update {
                    if let Some(mi) = u.mean_mi {
                        ep.mi.0 += mi;
                        ep.mi.1 += 1;
                    }
                    ep.entropy.0 += u.mean_entropy;
                    ep.entropy.1 += 1;
                    ep.losses.0[0] += u.value_loss;
                    ep.losses.0[1] += u.q_loss;
                    ep.losses.0[2] += u.policy_loss;
                    ep.losses.1 += 1;
                }
                if out.step.state.done {
                    let n = ep.losses.1;
                    let loss = |i: usize| (n > 0).then(|| ep.losses.0[i] / n as f64);
                    let row = MetricRow {
                        run_id: run.id.clone(),
                        algorithm: run.algorithm,
                        seed: run.seed_index as u64,
                        phase,
                        env_step: agent.env_steps(),
                        episode_return: ep.ret,
                        episode_length: ep.len,
                        mean_mi: EpisodeStats::mean(ep.mi),
                        mean_entropy: EpisodeStats::mean(ep.entropy),
                        beta: out.beta,
                        value_loss: loss(0),
                        q_loss: loss(1),
                        policy_loss: loss(2),
                    };
                    if let Some(w) = sink.as_deref_mut() {
                        w.write(&row)?;
                    }
                    rows.push(row);
                    ep = EpisodeStats::default();
                    state = env.reset();
                } else {
                    state = out.step.state;
                }
            }
        }
        agent_out = Some(agent);
        Ok(())
    })();
    if let Some(w) = sink {
        if let Err(e) = w.flush() {
            log::error!("{}: could not flush metrics: {e}", run.id);
        }
    }
    let error = outcome.err().map(|e| {
        log::error!("{}: {e}", run.id);
        e.to_string()
    });
    RunResult {
        spec: run.clone(),
        rows,
        phase_params,
        agent: agent_out,
        error,
    }
}

/// Trains every (algorithm, seed) run on a pool of `workers` threads.
///
/// With `out` set, each run writes `runs/<id>/metrics.csv`,
/// `runs/<id>/phases.jsonl` and `runs/<id>/checkpoint/`, and the
/// experiment writes `summary.csv` and `phase_summary.csv`.
pub fn run_training(
    spec: &ExperimentSpec,
    template: &AgentConfig,
    out: Option<&Path>,
    workers: usize,
) -> Result<TrainingReport> {
    spec.validate()?;
    for alg in &spec.algorithms {
        spec.agent_config(template, *alg).validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| invalid(format!("worker pool: {e}")))?;
    let runs = spec.runs();
    let results: Vec<Result<RunResult>> = pool.install(|| {
        use rayon::prelude::*;
        runs.par_iter()
            .map(|run| -> Result<RunResult> {
                let Some(out) = out else {
                    return Ok(train_run(spec, template, run, None));
                };
                let dir = run_dir(out, &run.id);
                std::fs::create_dir_all(&dir)?;
                let mut writer = MetricWriter::create(&dir.join("metrics.csv"))?;
                let result = train_run(spec, template, run, Some(&mut writer));
                write_jsonl(&dir.join("phases.jsonl"), &result.phase_params)?;
                if let Some(agent) = &result.agent {
                    agent.save(&dir.join("checkpoint"))?;
                }
                Ok(result)
            })
            .collect()
    });
    let report = TrainingReport {
        runs: results.into_iter().collect::<Result<_>>()?,
    };
    if let Some(out) = out {
        let rows = report.rows();
        write_csv(
            &out.join("summary.csv"),
            &aggregate(&rows, spec.summary_bucket),
        )?;
        write_csv(
            &out.join("phase_summary.csv"),
            &final_window(&rows, spec.phase_len(), 0.1),
        )?;
    }
    Ok(report)
}

/// Mean final-window return of the last phase across seeds, per algorithm.
pub fn final_phase_scores(
    report: &TrainingReport,
    spec: &ExperimentSpec,
) -> BTreeMap<Algorithm, PhaseSummary> {
    let last = spec.n_phases() - 1;
    final_window(&report.rows(), spec.phase_len(), 0.1)
        .into_iter()
        .filter(|s| s.phase == last)
        .map(|s| (s.algorithm, s))
        .collect()
}

/// Sweep objective: trains `n_agents` seeds of `algorithm` without
/// resampling and scores the final-window mean return.
pub fn sweep_objective<'a>(
    spec: &'a ExperimentSpec,
    template: &'a AgentConfig,
    algorithm: Algorithm,
) -> impl Fn(f64) -> Result<f64> + Sync + 'a {
    move |coefficient| {
        let mut s = spec.clone();
        s.algorithms = vec![algorithm];
        s.coefficients = BTreeMap::from([(algorithm, coefficient)]);
        s.resample = ResampleSpec::default();
        s.resample_interval = None;
        let report = run_training(&s, template, None, 1)?;
        if let Some(bad) = report.diverged().first() {
            return Err(Error::Diverged(format!(
                "{}: {}",
                bad.spec.id,
                bad.error.as_deref().unwrap_or("")
            )));
        }
        final_phase_scores(&report, &s)
            .get(&algorithm)
            .map(|p| p.mean)
            .ok_or_else(|| Error::Precondition("no complete episodes in the final window".into()))
    }
}
