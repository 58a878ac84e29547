//! Agent checkpoints: network and optimizer tensors in the binary container,
//! everything else in a JSON sidecar.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Agent, AgentConfig, BetaController, NetworkSet};
use crate::distrib::MarginalEstimate;
use crate::error::{Error, Result};
use crate::ndiff::checkpoint::{read_tensors, write_tensors};
use crate::ndiff::{Adam, AdamConfig, Mlp, Tensor};

pub const PARAMS_FILE: &str = "params.bin";
pub const SIDECAR_FILE: &str = "agent.json";
const SIDECAR_FORMAT: &str = "claclab-agent/1";

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format: String,
    config: AgentConfig,
    obs_dim: usize,
    act_dim: usize,
    marginal: MarginalEstimate,
    beta_controller: Option<BetaController>,
    rng: ChaCha8Rng,
    explore_rng: ChaCha8Rng,
    env_steps: u64,
    grad_steps: u64,
    adam: BTreeMap<String, (AdamConfig, u64)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Agent {
    /// Writes `params.bin` and `agent.json` into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut tensors: Vec<(String, Tensor)> = Vec::new();
        let mut adam = BTreeMap::new();
        for (name, net, opt) in self.nets.named() {
            for (l, (w, b)) in net.weights().iter().zip(net.biases()).enumerate() {
                tensors.push((format!("{name}.w{l}"), w.clone()));
                tensors.push((format!("{name}.b{l}"), b.clone()));
            }
            if let Some(opt) = opt {
                for (i, (m, v)) in opt
                    .first_moments()
                    .iter()
                    .zip(opt.second_moments())
                    .enumerate()
                {
                    tensors.push((format!("{name}.adam_m{i}"), m.clone()));
                    tensors.push((format!("{name}.adam_v{i}"), v.clone()));
                }
                adam.insert(name.to_string(), (opt.config, opt.step_count()));
            }
        }
        let mut out = BufWriter::new(File::create(dir.join(PARAMS_FILE))?);
        write_tensors(&mut out, &tensors)?;
        out.flush()?;

        let sidecar = Sidecar {
            format: SIDECAR_FORMAT.to_string(),
            config: self.config.clone(),
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            marginal: self.marginal.clone(),
            beta_controller: self.beta_ctrl.clone(),
            rng: self.rng.clone(),
            explore_rng: self.explore_rng.clone(),
            env_steps: self.env_steps,
            grad_steps: self.grad_steps,
            adam,
        };
        let mut out = BufWriter::new(File::create(dir.join(SIDECAR_FILE))?);
        serde_json::to_writer_pretty(&mut out, &sidecar)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    /// Restores an agent saved by [`Agent::save`]; training resumes bit-exactly
    /// given the same replay contents.
    pub fn load(dir: &Path) -> Result<Self> {
        let sidecar: Sidecar =
            serde_json::from_reader(BufReader::new(File::open(dir.join(SIDECAR_FILE))?))?;
        if sidecar.format != SIDECAR_FORMAT {
            return Err(bad(format!(
                "unsupported sidecar format `{}`",
                sidecar.format
            )));
        }
        sidecar.config.validate()?;
        let mut tensors: BTreeMap<String, Tensor> =
            read_tensors(BufReader::new(File::open(dir.join(PARAMS_FILE))?))?
                .into_iter()
                .collect();
        let layers = sidecar.config.hidden.len() + 1;

        let mut take = |key: String| {
            tensors
                .remove(&key)
                .ok_or_else(|| bad(format!("missing tensor `{key}`")))
        };
        let mut net = |name: &str| -> Result<Mlp> {
            let mut ws = Vec::new();
            let mut bs = Vec::new();
            for l in 0..layers {
                ws.push(take(format!("{name}.w{l}"))?);
                bs.push(take(format!("{name}.b{l}"))?);
            }
            Mlp::from_parts(ws, bs).map_err(|e| bad(format!("{name}: {e}")))
        };
        let value = net("value")?;
        let value_target = net("value_target")?;
        let q1 = net("q1")?;
        let q2 = net("q2")?;
        let policy = net("policy")?;
        drop(net);
        let mut opt = |name: &str, net: &Mlp| -> Result<Adam> {
            let (config, step) = *sidecar
                .adam
                .get(name)
                .ok_or_else(|| bad(format!("missing optimizer state for `{name}`")))?;
            let mut m = Vec::new();
            let mut v = Vec::new();
            for i in 0..2 * layers {
                m.push(take(format!("{name}.adam_m{i}"))?);
                v.push(take(format!("{name}.adam_v{i}"))?);
            }
            Adam::from_parts(net, config, step, m, v).map_err(|e| bad(format!("{name}: {e}")))
        };
        let nets = NetworkSet {
            opt_value: opt("value", &value)?,
            opt_q1: opt("q1", &q1)?,
            opt_q2: opt("q2", &q2)?,
            opt_policy: opt("policy", &policy)?,
            value,
            value_target,
            q1,
            q2,
            policy,
        };
        drop(opt);
        if let Some(extra) = tensors.keys().next() {
            return Err(bad(format!("unexpected tensor `{extra}`")));
        }
        let io_ok = nets.policy.input_dim() == sidecar.obs_dim
            && nets.policy.output_dim() == 2 * sidecar.act_dim
            && nets.q1.input_dim() == sidecar.obs_dim + sidecar.act_dim
            && sidecar.marginal.dim() == sidecar.act_dim;
        if !io_ok {
            return Err(bad("network shapes disagree with recorded dimensions"));
        }
        Ok(Agent {
            config: sidecar.config,
            obs_dim: sidecar.obs_dim,
            act_dim: sidecar.act_dim,
            nets,
            marginal: sidecar.marginal,
            beta_ctrl: sidecar.beta_controller,
            rng: sidecar.rng,
            explore_rng: sidecar.explore_rng,
            env_steps: sidecar.env_steps,
            grad_steps: sidecar.grad_steps,
            warned_uninitialized: false,
        })
    }
}
