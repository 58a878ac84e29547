//! Scalar reference implementations of the network losses, written
//! against flat parameter vectors with no library code involved. Each
//! evaluation also reports its branch pattern (ReLU signs, log-std clamp,
//! which critic is smaller) so finite differences that straddle a kink can
//! be recognized and skipped.

#![allow(dead_code)]

use rand::Rng;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
const EPS: f64 = 1e-6;

/// ReLU MLP over `theta` laid out as `w0 (in x out, row-major), b0, w1, b1, ...`.
pub fn forward(sizes: &[usize], theta: &[f64], x: &[f64], pattern: &mut Vec<bool>) -> Vec<f64> {
    let mut h = x.to_vec();
    let mut off = 0;
    for l in 0..sizes.len() - 1 {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = &theta[off..off + n_in * n_out];
        off += n_in * n_out;
        let b = &theta[off..off + n_out];
        off += n_out;
        let mut y = b.to_vec();
        for i in 0..n_in {
            for j in 0..n_out {
                y[j] += h[i] * w[i * n_out + j];
            }
        }
        if l + 2 < sizes.len() {
            for v in &mut y {
                pattern.push(*v > 0.0);
                *v = v.max(0.0);
            }
        }
        h = y;
    }
    assert_eq!(off, theta.len(), "parameter count");
    h
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// `0.5 (f(x) - y)^2` for a scalar-output net.
pub fn regression(sizes: &[usize], theta: &[f64], x: &[f64], y: f64) -> (f64, Vec<bool>) {
    let mut pat = Vec::new();
    let v = forward(sizes, theta, x, &mut pat)[0];
    (0.5 * (v - y) * (v - y), pat)
}

#[derive(Debug, Clone, Copy)]
pub enum Penalty<'a> {
    /// `beta`, marginal mean and variance per action dimension.
    Information(f64, &'a [f64], &'a [f64]),
    Entropy(f64),
    None,
}

pub struct PolicyEval {
    pub loss: f64,
    pub log_pi: f64,
    pub log_marg: Option<f64>,
    pub q_min: f64,
    pub pre_squash: Vec<f64>,
    pub pattern: Vec<bool>,
}

fn log_one_minus_tanh_sq(u: &[f64]) -> f64 {
    u.iter().map(|u| (1.0 - u.tanh().powi(2) + EPS).ln()).sum()
}

/// Single-state reparameterized policy objective.
pub fn policy_objective(
    p_sizes: &[usize],
    p_theta: &[f64],
    q_sizes: &[usize],
    q1: &[f64],
    q2: &[f64],
    state: &[f64],
    noise: &[f64],
    penalty: Penalty<'_>,
) -> PolicyEval {
    let mut pattern = Vec::new();
    let out = forward(p_sizes, p_theta, state, &mut pattern);
    let k = noise.len();
    let mut u = vec![0.0; k];
    let mut log_pi = 0.0;
    for j in 0..k {
        let raw = out[k + j];
        pattern.push(raw < -20.0);
        pattern.push(raw > 2.0);
        let ls = raw.clamp(-20.0, 2.0);
        u[j] = out[j] + ls.exp() * noise[j];
        log_pi += -0.5 * noise[j] * noise[j] - ls - HALF_LN_2PI;
    }
    log_pi -= log_one_minus_tanh_sq(&u);
    let mut sa = state.to_vec();
    sa.extend(u.iter().map(|x| x.tanh()));
    let a = forward(q_sizes, q1, &sa, &mut pattern)[0];
    let b = forward(q_sizes, q2, &sa, &mut pattern)[0];
    pattern.push(a <= b);
    let q_min = a.min(b);
    let (loss, log_marg) = match penalty {
        Penalty::Information(beta, mu, var) => {
            let lm = (0..k)
                .map(|j| -0.5 * (u[j] - mu[j]).powi(2) / var[j] - 0.5 * var[j].ln() - HALF_LN_2PI)
                .sum::<f64>()
                - log_one_minus_tanh_sq(&u);
            (beta * (log_pi - lm) - q_min, Some(lm))
        }
        Penalty::Entropy(alpha) => (alpha * log_pi - q_min, None),
        Penalty::None => (-q_min, None),
    };
    PolicyEval {
        loss,
        log_pi,
        log_marg,
        q_min,
        pre_squash: u,
        pattern,
    }
}

/// Outcome of a sampled central-difference check.
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    /// `||g - fd|| / max(||g||, ||fd||)` over the checked coordinates.
    pub rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a kink.
    pub skipped: usize,
}

/// Coordinates to check: every one when `n` covers the whole vector,
/// otherwise up to `n / tensors` random picks from each weight and bias
/// tensor so small tensors are never starved.
pub fn pick_coords<R: Rng>(sizes: &[usize], n: usize, rng: &mut R) -> Vec<usize> {
    let total = param_count(sizes);
    if n >= total {
        return (0..total).collect();
    }
    let mut segments = Vec::new();
    let mut off = 0;
    for w in sizes.windows(2) {
        segments.push((off, w[0] * w[1]));
        off += w[0] * w[1];
        segments.push((off, w[1]));
        off += w[1];
    }
    let per = (n / segments.len()).max(1);
    segments
        .into_iter()
        .flat_map(|(start, len)| {
            let k = per.min(len);
            (0..k)
                .map(|_| start + rng.random_range(0..len))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Central differences with step `h` at `coords`, compared with `analytic`.
pub fn fd_check(
    theta: &[f64],
    analytic: &[f64],
    h: f64,
    coords: &[usize],
    loss: impl Fn(&[f64]) -> (f64, Vec<bool>),
) -> FdReport {
    assert_eq!(theta.len(), analytic.len());
    let (_, base) = loss(theta);
    let mut p = theta.to_vec();
    let (mut diff, mut na, mut nf) = (0.0, 0.0, 0.0);
    let (mut checked, mut skipped) = (0, 0);
    for &i in coords {
        p[i] = theta[i] + h;
        let (up, pu) = loss(&p);
        p[i] = theta[i] - h;
        let (down, pd) = loss(&p);
        p[i] = theta[i];
        if pu != base || pd != base {
            skipped += 1;
            continue;
        }
        let fd = (up - down) / (2.0 * h);
        diff += (fd - analytic[i]).powi(2);
        na += analytic[i].powi(2);
        nf += fd * fd;
        checked += 1;
    }
    let denom = na.sqrt().max(nf.sqrt());
    let rel_error = if denom == 0.0 {
        diff.sqrt()
    } else {
        diff.sqrt() / denom
    };
    FdReport {
        rel_error,
        checked,
        skipped,
    }
}

/// Expected N-chain return over a `horizon`-step episode starting in state
/// 0, by backward induction. Each state picks the best `x` in `grid`
/// (positions in `[0, 1]`), or uses `fixed[i]` when given.
pub fn nchain_dp(
    hidden: &[f64],
    sharpness: f64,
    horizon: usize,
    grid: &[f64],
    fixed: Option<&[f64]>,
) -> f64 {
    let n = hidden.len() + 1;
    let mut v = vec![0.0; n];
    for _ in 0..horizon {
        let mut next = vec![0.0; n];
        for i in 0..n - 1 {
            let advance_reward = if i + 1 == n - 1 { 0.0 } else { -1.0 };
            let value = |x: f64| {
                let p = (-sharpness * (x - hidden[i]).abs()).exp();
                p * (advance_reward + v[i + 1]) + (1.0 - p) * (-1.0 + v[i])
            };
            next[i] = match fixed {
                Some(xs) => value(xs[i]),
                None => grid
                    .iter()
                    .map(|&x| value(x))
                    .fold(f64::NEG_INFINITY, f64::max),
            };
        }
        v = next;
    }
    v[0]
}
