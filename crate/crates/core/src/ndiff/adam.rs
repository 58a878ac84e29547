use serde::{Deserialize, Serialize};

use super::{Grads, Mlp, Tensor};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for one network, with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        let zeros = || {
            net.params()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect()
        };
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Restores saved moments; shapes are checked against `net`.
    pub fn from_parts(
        net: &Mlp,
        config: AdamConfig,
        step: u64,
        m: Vec<Tensor>,
        v: Vec<Tensor>,
    ) -> Result<Self> {
        let ok = m.len() == v.len()
            && net.params().count() == m.len()
            && net
                .params()
                .zip(&m)
                .zip(&v)
                .all(|((p, a), b)| p.same_shape(a) && p.same_shape(b));
        if !ok {
            return Err(invalid("adam moments do not match network"));
        }
        Ok(Self { config, step, m, v })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// One descent step on `net` along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) -> Result<()> {
        let congruent = net.params().count() == grads.tensors().count()
            && net
                .params()
                .zip(grads.tensors())
                .all(|(p, g)| p.same_shape(g));
        if !congruent {
            return Err(invalid("gradients do not match network parameters"));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in net
            .params_mut()
            .zip(grads.tensors())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(invalid(format!(
            "smoothing coefficient {tau} outside [0, 1]"
        )));
    }
    if target.layer_sizes() != online.layer_sizes() {
        return Err(invalid("target and online networks differ in shape"));
    }
    for (t, o) in target.params_mut().zip(online.params()) {
        for (t, &o) in t.data_mut().iter_mut().zip(o.data()) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn scalar(value: f64) -> Mlp {
        Mlp::from_parts(
            vec![Tensor::new(vec![1, 1], vec![value]).unwrap()],
            vec![Tensor::new(vec![1], vec![value]).unwrap()],
        )
        .unwrap()
    }

    fn grads(g: f64) -> Grads {
        Grads {
            weights: vec![Tensor::full(vec![1, 1], g)],
            biases: vec![Tensor::full(vec![1], g)],
        }
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut rng = seed::rng(0);
        let mut net = Mlp::new(&[3, 4, 2], &mut rng).unwrap();
        let before = net.clone();
        let mut adam = Adam::new(&net, AdamConfig::default());
        let g = Grads::zeros_like(&net);
        for _ in 0..5 {
            adam.step(&mut net, &g).unwrap();
        }
        assert_eq!(net, before);
        assert_eq!(adam.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = scalar(0.0);
        let mut adam = Adam::new(&net, AdamConfig::with_learning_rate(0.01));
        adam.step(&mut net, &grads(3.7)).unwrap();
        let w = net.weights()[0].data()[0];
        assert!(w < 0.0);
        assert!((w + 0.01).abs() < 1e-9);
        let mut net = scalar(0.0);
        let mut adam = Adam::new(&net, AdamConfig::with_learning_rate(0.01));
        adam.step(&mut net, &grads(-0.2)).unwrap();
        assert!((net.weights()[0].data()[0] - 0.01).abs() < 1e-8);
    }

    #[test]
    fn three_steps_match_scalar_recurrence() {
        // Independent scalar recurrence for g = 1, lr = 1e-3.
        let (lr, b1, b2, eps) = (1e-3_f64, 0.9_f64, 0.999_f64, 1e-8_f64);
        let (mut p, mut m, mut v) = (0.5_f64, 0.0_f64, 0.0_f64);
        let mut expected = vec![];
        for t in 1..=3 {
            m = b1 * m + (1.0 - b1);
            v = b2 * v + (1.0 - b2);
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            p -= lr * mh / (vh.sqrt() + eps);
            expected.push(p);
        }
        let mut net = scalar(0.5);
        let mut adam = Adam::new(&net, AdamConfig::with_learning_rate(lr));
        for e in expected {
            adam.step(&mut net, &grads(1.0)).unwrap();
            assert!((net.weights()[0].data()[0] - e).abs() < 1e-15);
        }
    }

    #[test]
    fn mismatched_grads_rejected() {
        let mut net = scalar(0.0);
        let mut adam = Adam::new(&net, AdamConfig::default());
        let other = Mlp::zeros(&[2, 1]).unwrap();
        assert!(adam.step(&mut net, &Grads::zeros_like(&other)).is_err());
    }

    #[test]
    fn polyak_extremes_and_default() {
        let online = scalar(1.0);
        let mut target = scalar(0.0);
        polyak_update(&mut target, &online, 0.0).unwrap();
        assert_eq!(target, scalar(0.0));
        polyak_update(&mut target, &online, 0.005).unwrap();
        assert!((target.weights()[0].data()[0] - 0.005).abs() < 1e-15);
        polyak_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target, online);
        assert!(polyak_update(&mut target, &online, 1.5).is_err());
        assert!(polyak_update(&mut target, &online, -0.1).is_err());
    }

    #[test]
    fn polyak_shrinks_gap_by_one_minus_tau() {
        let mut rng = seed::rng(11);
        let online = Mlp::new(&[4, 6, 1], &mut rng).unwrap();
        let mut target = Mlp::new(&[4, 6, 1], &mut rng).unwrap();
        let gap = |t: &Mlp| {
            t.flatten()
                .iter()
                .zip(online.flatten())
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let before = gap(&target);
        polyak_update(&mut target, &online, 0.005).unwrap();
        assert!((gap(&target) - 0.995 * before).abs() < 1e-12);
    }
}
