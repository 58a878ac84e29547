use crate::error::{invalid, Result};

/// Joint probability mass over a finite state x action grid, row = state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    states: usize,
    actions: usize,
    p: Vec<f64>,
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(pmf: &[f64]) -> f64 {
    -pmf.iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

impl DiscreteJoint {
    pub fn new(states: usize, actions: usize, p: Vec<f64>) -> Result<Self> {
        if states == 0 || actions == 0 || p.len() != states * actions {
            return Err(invalid("joint pmf shape mismatch"));
        }
        if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(invalid("joint pmf entries must be finite and nonnegative"));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("joint pmf sums to {total}")));
        }
        Ok(Self { states, actions, p })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let actions = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != actions) {
            return Err(invalid("ragged joint pmf"));
        }
        Self::new(
            rows.len(),
            actions,
            rows.iter()
                .flat_map(|r| r.as_ref().iter().copied())
                .collect(),
        )
    }

    /// Joint of `p(s) * pi(a|s)`.
    pub fn from_policy(state_probs: &[f64], policy: &[Vec<f64>]) -> Result<Self> {
        if state_probs.len() != policy.len() {
            return Err(invalid("one policy row per state"));
        }
        let rows: Vec<Vec<f64>> = state_probs
            .iter()
            .zip(policy)
            .map(|(ps, row)| row.iter().map(|pa| ps * pa).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.p[s * self.actions + a]
    }

    pub fn state_marginal(&self) -> Vec<f64> {
        (0..self.states)
            .map(|s| (0..self.actions).map(|a| self.get(s, a)).sum())
            .collect()
    }

    pub fn action_marginal(&self) -> Vec<f64> {
        (0..self.actions)
            .map(|a| (0..self.states).map(|s| self.get(s, a)).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let p = (0..self.actions)
            .flat_map(|a| (0..self.states).map(move |s| (s, a)))
            .map(|(s, a)| self.get(s, a))
            .collect();
        Self {
            states: self.actions,
            actions: self.states,
            p,
        }
    }

    /// `sum_{s,a} p(s,a) ln[p(s,a) / (p(s) p(a))]`.
    pub fn mutual_information(&self) -> f64 {
        let ps = self.state_marginal();
        let pa = self.action_marginal();
        let mut mi = 0.0;
        for s in 0..self.states {
            for a in 0..self.actions {
                let j = self.get(s, a);
                if j > 0.0 {
                    mi += j * (j / (ps[s] * pa[a])).ln();
                }
            }
        }
        mi.max(0.0)
    }

    /// `H(p_a) - E_s[H(pi(.|s))]`.
    pub fn mi_from_entropies(&self) -> f64 {
        let ps = self.state_marginal();
        let conditional: f64 = (0..self.states)
            .filter(|&s| ps[s] > 0.0)
            .map(|s| {
                let row: Vec<f64> = (0..self.actions).map(|a| self.get(s, a) / ps[s]).collect();
                ps[s] * entropy(&row)
            })
            .sum();
        entropy(&self.action_marginal()) - conditional
    }
}
