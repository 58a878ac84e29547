//! Experiment configuration files and `--set` overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use claclab::agents::{AgentConfig, Algorithm};
use claclab::envs::{EnvParams, NChainParams, ResampleSpec};
use claclab::harness::{default_regime, EvalRegime, ExperimentSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub algorithms: Vec<Algorithm>,
    pub coefficients: BTreeMap<Algorithm, f64>,
    pub total_steps: u64,
    pub resample_interval: Option<u64>,
    pub n_agents: usize,
    pub summary_bucket: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let d = ExperimentSpec::default();
        Self {
            algorithms: d.algorithms,
            coefficients: d.coefficients,
            total_steps: d.total_steps,
            resample_interval: d.resample_interval,
            n_agents: d.n_agents,
            summary_bucket: d.summary_bucket,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub resamples: usize,
    pub episodes: usize,
    pub random: Option<ResampleSpec>,
    pub extreme: Option<ResampleSpec>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = ExperimentSpec::default();
        Self {
            resamples: d.eval_resamples,
            episodes: d.eval_episodes,
            random: None,
            extreme: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// `start:stop:step` or a comma-separated list.
    pub grid: String,
    /// Refinement rounds around the incumbent.
    pub rounds: usize,
    /// Points per refinement window.
    pub points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            grid: "0:1:0.1".into(),
            rounds: 1,
            points: 5,
        }
    }
}

/// Top-level config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub experiment: ExperimentSection,
    pub env: EnvParams,
    /// Phase resampling rules; omitted means the Beta prior for the
    /// N-chain and fixed parameters otherwise.
    pub resample: Option<ResampleSpec>,
    pub eval: EvalSection,
    pub agent: AgentConfig,
    pub sweep: SweepSection,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            experiment: ExperimentSection::default(),
            env: EnvParams::Nchain(NChainParams::default()),
            resample: None,
            eval: EvalSection::default(),
            agent: AgentConfig::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl ConfigFile {
    /// Parses `text`, applies `key=value` overrides, and fills every
    /// environment-dependent default so the result is self-contained.
    pub fn resolve(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: ConfigFile = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if cfg.resample.is_none() {
            cfg.resample = Some(match &cfg.env {
                EnvParams::Nchain(p) => ResampleSpec::nchain_beta(p),
                EnvParams::Pendulum(_) => ResampleSpec::default(),
            });
        }
        for (slot, regime) in [
            (&mut cfg.eval.random, EvalRegime::Random),
            (&mut cfg.eval.extreme, EvalRegime::Extreme),
        ] {
            if slot.is_none() {
                *slot = Some(default_regime(&cfg.env, regime));
            }
        }
        if cfg.agent.mirl_horizon.is_none() {
            cfg.agent.mirl_horizon = Some(cfg.experiment.total_steps);
        }
        cfg.experiment_spec()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        for alg in &cfg.experiment.algorithms {
            cfg.experiment_spec()
                .agent_config(&cfg.agent, *alg)
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::resolve(&text, overrides).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn experiment_spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            algorithms: self.experiment.algorithms.clone(),
            coefficients: self.experiment.coefficients.clone(),
            total_steps: self.experiment.total_steps,
            resample_interval: self.experiment.resample_interval,
            n_agents: self.experiment.n_agents,
            eval_episodes: self.eval.episodes,
            eval_resamples: self.eval.resamples,
            summary_bucket: self.experiment.summary_bucket,
            base_seed: self.seed,
            env: self.env.clone(),
            resample: self.resample.clone().unwrap_or_default(),
            random_regime: self.eval.random.clone(),
            extreme_regime: self.eval.extreme.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self)
            .map_err(|e| CliError::Runtime(format!("cannot serialize config: {e}")))
    }
}

/// Sets a dotted path to a TOML-literal value; bare words become strings.
fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{spec}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad override key `{key}`")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = path.split_last().expect("nonempty");
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_resolves_to_defaults() {
        let cfg = ConfigFile::resolve("", &[]).unwrap();
        assert_eq!(cfg.agent.gamma, 0.99);
        assert_eq!(cfg.agent.batch_size, 256);
        assert_eq!(cfg.agent.hidden, vec![256, 256]);
        assert!(cfg.resample.as_ref().is_some_and(|r| !r.is_empty()));
        assert_eq!(cfg.agent.mirl_horizon, Some(cfg.experiment.total_steps));
    }

    #[test]
    fn overrides_apply() {
        let sets = vec![
            "agent.beta=0.25".to_string(),
            "experiment.algorithms=[\"sac\"]".to_string(),
            "env.kind=pendulum".to_string(),
            "experiment.coefficients.sac=0.2".to_string(),
        ];
        let cfg = ConfigFile::resolve("seed = 3\n", &sets).unwrap();
        assert_eq!(cfg.agent.beta, 0.25);
        assert_eq!(cfg.experiment.algorithms, vec![Algorithm::Sac]);
        assert!(matches!(cfg.env, EnvParams::Pendulum(_)));
        assert_eq!(cfg.experiment.coefficients[&Algorithm::Sac], 0.2);
        assert!(cfg.resample.unwrap().is_empty());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            ConfigFile::resolve("[agent]\nbeta_typo = 1\n", &[]),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            ConfigFile::resolve("", &["agent.gamma=1.5".into()]),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            ConfigFile::resolve("", &["agent".into()]),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn resolved_snapshot_round_trips() {
        let cfg =
            ConfigFile::resolve("[agent]\nbeta = 0.5\n", &["agent.auto_beta=0.3".into()]).unwrap();
        let again = ConfigFile::resolve(&cfg.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(cfg, again);
    }
}
