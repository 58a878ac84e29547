//! Minibatch objectives for the value, Q and policy networks, each returning
//! its loss together with analytic parameter gradients.
//!
//! Policy noise is passed in explicitly so every objective is a
//! deterministic function of the parameters and can be checked against
//! finite differences.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::distrib::{
    neg_squash_correction_grad, DiagGaussian, MarginalEstimate, LOG_STD_MAX, LOG_STD_MIN,
};
use crate::error::{invalid, Error, Result};
use crate::ndiff::{Grads, Mlp, Tensor, Trace};

/// Penalty applied to sampled actions in the value target and policy objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    /// `beta * (log pi(a|s) - log pi_marg(a))`.
    Information(f64),
    /// `alpha * log pi(a|s)`.
    Entropy(f64),
}

impl Regularizer {
    pub fn coefficient(self) -> f64 {
        match self {
            Regularizer::Information(c) | Regularizer::Entropy(c) => c,
        }
    }

    fn needs_marginal(self) -> bool {
        matches!(self, Regularizer::Information(b) if b != 0.0)
    }
}

/// Soft state-value target for one sampled action.
///
/// A zero coefficient returns `q_min` bit-exactly, whatever the log-probs.
pub fn compute_value_target(q_min: f64, log_pi: f64, log_marg: f64, reg: Regularizer) -> f64 {
    match reg {
        Regularizer::Information(b) if b != 0.0 => q_min - b * (log_pi - log_marg),
        Regularizer::Entropy(a) if a != 0.0 => q_min - a * log_pi,
        _ => q_min,
    }
}

/// `(rows, cols)` matrix of independent standard normals, row-major draw order.
pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

/// Splits one policy-network output row into its Gaussian.
pub fn policy_head(row: &[f64]) -> Result<DiagGaussian> {
    if row.len() % 2 != 0 {
        return Err(invalid("policy output width must be even"));
    }
    let k = row.len() / 2;
    DiagGaussian::new(row[..k].to_vec(), row[k..].to_vec())
}

/// Reparameterized policy samples for a batch of states.
#[derive(Debug, Clone)]
pub struct PolicyPass {
    pub trace: Trace,
    pub noise: Tensor,
    pub dists: Vec<DiagGaussian>,
    pub pre_squash: Tensor,
    pub actions: Tensor,
    pub log_probs: Vec<f64>,
}

pub fn policy_pass(policy: &Mlp, states: &Tensor, noise: &Tensor) -> Result<PolicyPass> {
    let trace = policy.forward_trace(states)?;
    let out = trace.output();
    if out.cols() != 2 * noise.cols() || out.rows() != noise.rows() {
        return Err(invalid("noise shape does not match policy output"));
    }
    let (b, k) = (noise.rows(), noise.cols());
    let mut dists = Vec::with_capacity(b);
    let mut pre = Vec::with_capacity(b * k);
    let mut act = Vec::with_capacity(b * k);
    let mut log_probs = Vec::with_capacity(b);
    for r in 0..b {
        let d = policy_head(out.row(r))?;
        let s = d.sample_squashed(noise.row(r))?;
        pre.extend_from_slice(&s.pre_squash);
        act.extend_from_slice(&s.action);
        log_probs.push(s.log_prob);
        dists.push(d);
    }
    Ok(PolicyPass {
        trace,
        noise: noise.clone(),
        dists,
        pre_squash: Tensor::new(vec![b, k], pre)?,
        actions: Tensor::new(vec![b, k], act)?,
        log_probs,
    })
}

/// Both critics evaluated on the same state-action batch.
#[derive(Debug, Clone)]
pub struct QPair {
    pub trace1: Trace,
    pub trace2: Trace,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
}

impl QPair {
    /// Clipped double-Q value per row.
    pub fn q_min(&self) -> Vec<f64> {
        self.q1
            .iter()
            .zip(&self.q2)
            .map(|(a, b)| a.min(*b))
            .collect()
    }
}

pub fn q_pair(q1: &Mlp, q2: &Mlp, states: &Tensor, actions: &Tensor) -> Result<QPair> {
    let input = states.hcat(actions)?;
    let trace1 = q1.forward_trace(&input)?;
    let trace2 = q2.forward_trace(&input)?;
    let q1 = trace1.output().data().to_vec();
    let q2 = trace2.output().data().to_vec();
    Ok(QPair {
        trace1,
        trace2,
        q1,
        q2,
    })
}

fn marginal_log_probs(pass: &PolicyPass, marginal: &MarginalEstimate) -> Result<Option<Vec<f64>>> {
    if !marginal.is_initialized() {
        return Ok(None);
    }
    (0..pass.pre_squash.rows())
        .map(|r| marginal.log_prob(pass.pre_squash.row(r)))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn require_marginal(reg: Regularizer, marginal: &MarginalEstimate) -> Result<()> {
    if reg.needs_marginal() && !marginal.is_initialized() {
        return Err(Error::Precondition(
            "information penalty needs an initialized marginal".into(),
        ));
    }
    Ok(())
}

/// Value targets from fresh policy samples, treated as constants.
pub fn value_targets(
    pass: &PolicyPass,
    q: &QPair,
    marginal: &MarginalEstimate,
    reg: Regularizer,
) -> Result<Vec<f64>> {
    require_marginal(reg, marginal)?;
    let log_marg = marginal_log_probs(pass, marginal)?;
    Ok(q.q_min()
        .into_iter()
        .enumerate()
        .map(|(r, qm)| {
            let lm = log_marg.as_ref().map_or(0.0, |v| v[r]);
            compute_value_target(qm, pass.log_probs[r], lm, reg)
        })
        .collect())
}

/// Bellman targets `r + gamma * V_target(s')`, cut at terminal transitions.
pub fn q_targets(
    value_target: &Mlp,
    next_states: &Tensor,
    rewards: &[f64],
    dones: &[bool],
    gamma: f64,
) -> Result<Vec<f64>> {
    let v = value_target.forward(next_states)?;
    if v.rows() != rewards.len() || dones.len() != rewards.len() {
        return Err(invalid("batch length mismatch"));
    }
    Ok(rewards
        .iter()
        .zip(dones)
        .zip(v.data())
        .map(|((&r, &done), &v)| if done { r } else { r + gamma * v })
        .collect())
}

/// Mean of `0.5 * (net(x) - y)^2` and its parameter gradient.
pub fn regression_loss(net: &Mlp, inputs: &Tensor, targets: &[f64]) -> Result<(f64, Grads)> {
    let trace = net.forward_trace(inputs)?;
    regression_from_trace(net, &trace, targets)
}

fn regression_from_trace(net: &Mlp, trace: &Trace, targets: &[f64]) -> Result<(f64, Grads)> {
    let out = trace.output();
    if out.cols() != 1 || out.rows() != targets.len() || targets.is_empty() {
        return Err(invalid("regression expects one scalar output per target"));
    }
    let n = targets.len() as f64;
    let diffs: Vec<f64> = out.data().iter().zip(targets).map(|(v, y)| v - y).collect();
    let loss = diffs.iter().map(|d| 0.5 * d * d).sum::<f64>() / n;
    let upstream = Tensor::new(
        vec![targets.len(), 1],
        diffs.iter().map(|d| d / n).collect(),
    )?;
    Ok((loss, net.backward_trace(trace, &upstream)?.grads))
}

pub fn value_loss(value: &Mlp, states: &Tensor, targets: &[f64]) -> Result<(f64, Grads)> {
    regression_loss(value, states, targets)
}

pub fn q_loss(q: &Mlp, states: &Tensor, actions: &Tensor, targets: &[f64]) -> Result<(f64, Grads)> {
    regression_loss(q, &states.hcat(actions)?, targets)
}

#[derive(Debug, Clone)]
pub struct PolicyLoss {
    pub loss: f64,
    pub grads: Grads,
    /// Batch mean of `log pi(a|s) - log pi_marg(a)`; absent before the marginal exists.
    pub mean_mi: Option<f64>,
    /// Batch mean of `-log pi(a|s)`.
    pub mean_entropy: f64,
}

/// Reparameterized policy objective and its gradient.
pub fn policy_loss(
    policy: &Mlp,
    q1: &Mlp,
    q2: &Mlp,
    states: &Tensor,
    noise: &Tensor,
    marginal: &MarginalEstimate,
    reg: Regularizer,
) -> Result<PolicyLoss> {
    let pass = policy_pass(policy, states, noise)?;
    let q = q_pair(q1, q2, states, &pass.actions)?;
    policy_loss_from(policy, q1, q2, &pass, &q, marginal, reg)
}

/// As [`policy_loss`], reusing forward passes already computed on the batch.
///
/// Per sample the objective is `beta (log pi - log pi_marg) - Q_min` or
/// `alpha log pi - Q_min`. The critic gradient flows through whichever Q
/// attains the minimum (ties go to the first). The marginal is a constant.
pub fn policy_loss_from(
    policy: &Mlp,
    q1: &Mlp,
    q2: &Mlp,
    pass: &PolicyPass,
    q: &QPair,
    marginal: &MarginalEstimate,
    reg: Regularizer,
) -> Result<PolicyLoss> {
    require_marginal(reg, marginal)?;
    let (b, k) = (pass.noise.rows(), pass.noise.cols());
    let log_marg = marginal_log_probs(pass, marginal)?;

    // dQ_min/da for every row.
    let mut pick1 = Tensor::zeros(vec![b, 1]);
    let mut pick2 = Tensor::zeros(vec![b, 1]);
    for r in 0..b {
        if q.q1[r] <= q.q2[r] {
            pick1.data_mut()[r] = 1.0;
        } else {
            pick2.data_mut()[r] = 1.0;
        }
    }
    let g1 = q1.input_gradient(&q.trace1, &pick1)?;
    let g2 = q2.input_gradient(&q.trace2, &pick2)?;
    let obs_dim = g1.cols() - k;

    let n = b as f64;
    let mut loss = 0.0;
    let mut mi_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut upstream = Tensor::zeros(vec![b, 2 * k]);
    let raw = pass.trace.output();
    for r in 0..b {
        let lp = pass.log_probs[r];
        let lm = log_marg.as_ref().map(|v| v[r]);
        let q_min = q.q1[r].min(q.q2[r]);
        loss += match reg {
            Regularizer::Information(beta) if beta != 0.0 => {
                beta * (lp - lm.expect("checked")) - q_min
            }
            Regularizer::Entropy(alpha) if alpha != 0.0 => alpha * lp - q_min,
            _ => -q_min,
        };
        if let Some(lm) = lm {
            mi_sum += lp - lm;
        }
        entropy_sum -= lp;

        let d = &pass.dists[r];
        let (std, eta, u) = (d.std(), pass.noise.row(r), pass.pre_squash.row(r));
        let up = upstream.row_mut(r);
        for j in 0..k {
            let t = u[j].tanh();
            let dq_da = g1.row(r)[obs_dim + j] + g2.row(r)[obs_dim + j];
            let (du_reg, dls_direct) = match reg {
                // Squash corrections cancel between the two log-probs.
                Regularizer::Information(beta) if beta != 0.0 => (
                    beta * (u[j] - marginal.mean()[j]) / marginal.variance()[j],
                    -beta,
                ),
                Regularizer::Entropy(alpha) if alpha != 0.0 => {
                    (alpha * neg_squash_correction_grad(u[j]), -alpha)
                }
                _ => (0.0, 0.0),
            };
            let dl_du = du_reg - dq_da * (1.0 - t * t);
            let raw_ls = raw.row(r)[k + j];
            let inside = (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_ls);
            up[j] = dl_du / n;
            up[k + j] = if inside {
                (dls_direct + dl_du * std[j] * eta[j]) / n
            } else {
                0.0
            };
        }
    }
    let grads = policy.backward_trace(&pass.trace, &upstream)?.grads;
    Ok(PolicyLoss {
        loss: loss / n,
        grads,
        mean_mi: log_marg.map(|_| mi_sum / n),
        mean_entropy: entropy_sum / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn value_target_examples() {
        assert_eq!(
            compute_value_target(1.0, -1.0, -2.0, Regularizer::Information(0.5)),
            0.5
        );
        assert_eq!(
            compute_value_target(1.3, -0.7, -0.7, Regularizer::Information(2.0)),
            1.3
        );
        assert_eq!(
            compute_value_target(1.3, -0.7, -5.0, Regularizer::Information(0.0)),
            1.3
        );
        assert_eq!(
            compute_value_target(1.0, -2.0, 0.0, Regularizer::Entropy(0.25)),
            1.5
        );
        assert_eq!(
            compute_value_target(1.0, f64::INFINITY, 0.0, Regularizer::Entropy(0.0)),
            1.0
        );
    }

    #[test]
    fn terminal_cuts_bootstrap() {
        let mut rng = seed::rng(1);
        let v = Mlp::new(&[2, 4, 1], &mut rng).unwrap();
        let s = Tensor::from_rows(&[[0.3, -0.2], [0.1, 0.9]]).unwrap();
        let y = q_targets(&v, &s, &[1.0, -1.0], &[true, false], 0.9).unwrap();
        assert_eq!(y[0], 1.0);
        let vs = v.forward(&s).unwrap();
        assert_eq!(y[1], -1.0 + 0.9 * vs.data()[1]);
        let y0 = q_targets(&v, &s, &[1.0, -1.0], &[false, false], 0.0).unwrap();
        assert_eq!(y0, vec![1.0, -1.0]);
    }

    #[test]
    fn regression_at_target_has_zero_gradient() {
        let mut rng = seed::rng(2);
        let v = Mlp::new(&[2, 8, 1], &mut rng).unwrap();
        let s = Tensor::from_rows(&[[0.3, -0.2]]).unwrap();
        let y = v.forward(&s).unwrap().into_data();
        let (loss, g) = regression_loss(&v, &s, &y).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.flatten().iter().all(|&x| x == 0.0));
    }

    fn fd_check(mut loss: impl FnMut(&[f64]) -> f64, theta: &[f64], grad: &[f64]) {
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..theta.len() {
            let mut p = theta.to_vec();
            p[i] += h;
            let up = loss(&p);
            p[i] -= 2.0 * h;
            let down = loss(&p);
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - grad[i]).abs() / (1e-6 + fd.abs().max(grad[i].abs())));
        }
        assert!(worst < 1e-4, "relative error {worst}");
    }

    #[test]
    fn policy_gradient_matches_finite_differences() {
        let mut rng = seed::rng(3);
        let policy = Mlp::new(&[3, 6, 2], &mut rng).unwrap();
        let q1 = Mlp::new(&[4, 6, 1], &mut rng).unwrap();
        let q2 = Mlp::new(&[4, 6, 1], &mut rng).unwrap();
        let states = Tensor::from_rows(&[[0.5, -0.3, 0.8], [0.1, 0.2, -0.6]]).unwrap();
        let noise = Tensor::from_rows(&[[0.4], [-1.1]]).unwrap();
        let marg = MarginalEstimate::with_moments(vec![0.2], vec![0.7], 1e-3).unwrap();
        for reg in [
            Regularizer::Information(0.5),
            Regularizer::Entropy(0.3),
            Regularizer::Information(0.0),
        ] {
            let out = policy_loss(&policy, &q1, &q2, &states, &noise, &marg, reg).unwrap();
            let theta = policy.flatten();
            fd_check(
                |p| {
                    let mut net = policy.clone();
                    net.set_flat(p).unwrap();
                    policy_loss(&net, &q1, &q2, &states, &noise, &marg, reg)
                        .unwrap()
                        .loss
                },
                &theta,
                &out.grads.flatten(),
            );
        }
    }

    #[test]
    fn uninitialized_marginal() {
        let mut rng = seed::rng(4);
        let policy = Mlp::new(&[1, 4, 2], &mut rng).unwrap();
        let q = Mlp::new(&[2, 4, 1], &mut rng).unwrap();
        let s = Tensor::from_rows(&[[1.0]]).unwrap();
        let e = Tensor::from_rows(&[[0.0]]).unwrap();
        let m = MarginalEstimate::new(1, 1e-3).unwrap();
        assert!(policy_loss(&policy, &q, &q, &s, &e, &m, Regularizer::Information(0.5)).is_err());
        let out = policy_loss(&policy, &q, &q, &s, &e, &m, Regularizer::Entropy(0.5)).unwrap();
        assert!(out.mean_mi.is_none());
    }
}
