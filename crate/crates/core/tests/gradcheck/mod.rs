//! Random single-transition instances of the three losses, scored against
//! the scalar oracle.

#![allow(dead_code)]

use claclab::agents::losses::{
    policy_loss, policy_pass, q_loss, q_pair, q_targets, value_loss, value_targets, Regularizer,
};
use claclab::distrib::MarginalEstimate;
use claclab::ndiff::{Mlp, Tensor};
use rand::Rng;

use crate::oracle::{self, FdReport, Penalty};

pub const FD_STEP: f64 = 1e-5;

/// One checked instance: the gradient comparison plus the gap between the
/// library's loss (or target) value and the oracle's.
#[derive(Debug, Clone, Copy)]
pub struct Checked {
    pub fd: FdReport,
    pub value_gap: f64,
}

fn jitter<R: Rng>(net: &mut Mlp, rng: &mut R) {
    let flat: Vec<f64> = net
        .flatten()
        .into_iter()
        .map(|x| x + rng.random_range(-0.1..0.1))
        .collect();
    net.set_flat(&flat).unwrap();
}

fn net<R: Rng>(sizes: &[usize], rng: &mut R) -> Mlp {
    let mut n = Mlp::new(sizes, rng).unwrap();
    jitter(&mut n, rng);
    n
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

fn uniform<R: Rng>(n: usize, lo: f64, hi: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn gaussian<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect()
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

pub struct Shapes<'a> {
    pub obs: usize,
    pub act: usize,
    pub hidden: &'a [usize],
    /// Coordinates sampled per finite-difference check, spread over tensors.
    pub coords: usize,
}

struct Marginal {
    est: MarginalEstimate,
    mean: Vec<f64>,
    var: Vec<f64>,
}

fn marginal<R: Rng>(act: usize, rng: &mut R) -> Marginal {
    let mean = uniform(act, -0.5, 0.5, rng);
    let var = uniform(act, 0.2, 2.0, rng);
    Marginal {
        est: MarginalEstimate::with_moments(mean.clone(), var.clone(), 1e-3).unwrap(),
        mean,
        var,
    }
}

fn regularizer<R: Rng>(rng: &mut R) -> Regularizer {
    match rng.random_range(0..3) {
        0 => Regularizer::Information(rng.random_range(0.05..2.0)),
        1 => Regularizer::Entropy(rng.random_range(0.05..1.0)),
        _ => Regularizer::Information(0.0),
    }
}

fn penalty<'a>(reg: Regularizer, m: &'a Marginal) -> Penalty<'a> {
    match reg {
        Regularizer::Information(b) if b != 0.0 => Penalty::Information(b, &m.mean, &m.var),
        Regularizer::Entropy(a) if a != 0.0 => Penalty::Entropy(a),
        _ => Penalty::None,
    }
}

/// Value regression towards a soft target built from a fresh policy sample.
pub fn value_instance<R: Rng>(s: &Shapes<'_>, rng: &mut R) -> Checked {
    let (vs, ps, qs) = (
        sizes(s.obs, s.hidden, 1),
        sizes(s.obs, s.hidden, 2 * s.act),
        sizes(s.obs + s.act, s.hidden, 1),
    );
    let (value, policy, q1, q2) = (net(&vs, rng), net(&ps, rng), net(&qs, rng), net(&qs, rng));
    let m = marginal(s.act, rng);
    let reg = regularizer(rng);
    let state = uniform(s.obs, -1.0, 1.0, rng);
    let noise = gaussian(s.act, rng);

    let states = Tensor::from_rows(&[&state]).unwrap();
    let eta = Tensor::from_rows(&[&noise]).unwrap();
    let pass = policy_pass(&policy, &states, &eta).unwrap();
    let q = q_pair(&q1, &q2, &states, &pass.actions).unwrap();
    let target = value_targets(&pass, &q, &m.est, reg).unwrap()[0];

    let o = oracle::policy_objective(
        &ps,
        &policy.flatten(),
        &qs,
        &q1.flatten(),
        &q2.flatten(),
        &state,
        &noise,
        penalty(reg, &m),
    );
    let oracle_target = match reg {
        Regularizer::Information(b) if b != 0.0 => o.q_min - b * (o.log_pi - o.log_marg.unwrap()),
        Regularizer::Entropy(a) if a != 0.0 => o.q_min - a * o.log_pi,
        _ => o.q_min,
    };

    let (loss, grads) = value_loss(&value, &states, &[target]).unwrap();
    let theta = value.flatten();
    let (oracle_loss, _) = oracle::regression(&vs, &theta, &state, target);
    let coords = oracle::pick_coords(&vs, s.coords, rng);
    let fd = oracle::fd_check(&theta, &grads.flatten(), FD_STEP, &coords, |p| {
        oracle::regression(&vs, p, &state, target)
    });
    Checked {
        fd,
        value_gap: rel_gap(target, oracle_target).max(rel_gap(loss, oracle_loss)),
    }
}

/// Critic regression towards `r + gamma * V_target(s')`.
pub fn q_instance<R: Rng>(s: &Shapes<'_>, rng: &mut R) -> Checked {
    let (vs, qs) = (sizes(s.obs, s.hidden, 1), sizes(s.obs + s.act, s.hidden, 1));
    let (value_target, q) = (net(&vs, rng), net(&qs, rng));
    let state = uniform(s.obs, -1.0, 1.0, rng);
    let next = uniform(s.obs, -1.0, 1.0, rng);
    let action = uniform(s.act, -1.0, 1.0, rng);
    let reward = rng.random_range(-2.0..2.0);
    let done = rng.random_bool(0.2);
    let gamma = 0.99;

    let target = q_targets(
        &value_target,
        &Tensor::from_rows(&[&next]).unwrap(),
        &[reward],
        &[done],
        gamma,
    )
    .unwrap()[0];
    let mut pat = Vec::new();
    let bootstrap = oracle::forward(&vs, &value_target.flatten(), &next, &mut pat)[0];
    let oracle_target = if done {
        reward
    } else {
        reward + gamma * bootstrap
    };

    let states = Tensor::from_rows(&[&state]).unwrap();
    let actions = Tensor::from_rows(&[&action]).unwrap();
    let (loss, grads) = q_loss(&q, &states, &actions, &[target]).unwrap();
    let mut sa = state.clone();
    sa.extend_from_slice(&action);
    let theta = q.flatten();
    let (oracle_loss, _) = oracle::regression(&qs, &theta, &sa, target);
    let coords = oracle::pick_coords(&qs, s.coords, rng);
    let fd = oracle::fd_check(&theta, &grads.flatten(), FD_STEP, &coords, |p| {
        oracle::regression(&qs, p, &sa, target)
    });
    Checked {
        fd,
        value_gap: rel_gap(target, oracle_target).max(rel_gap(loss, oracle_loss)),
    }
}

/// Reparameterized policy objective under a random regularizer.
pub fn policy_instance<R: Rng>(s: &Shapes<'_>, rng: &mut R) -> Checked {
    let (ps, qs) = (
        sizes(s.obs, s.hidden, 2 * s.act),
        sizes(s.obs + s.act, s.hidden, 1),
    );
    let (policy, q1, q2) = (net(&ps, rng), net(&qs, rng), net(&qs, rng));
    let m = marginal(s.act, rng);
    let reg = regularizer(rng);
    let state = uniform(s.obs, -1.0, 1.0, rng);
    let noise = gaussian(s.act, rng);

    let states = Tensor::from_rows(&[&state]).unwrap();
    let eta = Tensor::from_rows(&[&noise]).unwrap();
    let out = policy_loss(&policy, &q1, &q2, &states, &eta, &m.est, reg).unwrap();
    let (t1, t2) = (q1.flatten(), q2.flatten());
    let pen = penalty(reg, &m);
    let objective = |p: &[f64]| {
        let e = oracle::policy_objective(&ps, p, &qs, &t1, &t2, &state, &noise, pen);
        (e.loss, e.pattern)
    };
    let theta = policy.flatten();
    let (oracle_loss, _) = objective(&theta);
    let coords = oracle::pick_coords(&ps, s.coords, rng);
    let fd = oracle::fd_check(&theta, &out.grads.flatten(), FD_STEP, &coords, objective);
    Checked {
        fd,
        value_gap: rel_gap(out.loss, oracle_loss),
    }
}
