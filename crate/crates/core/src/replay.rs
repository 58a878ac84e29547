//! Bounded FIFO experience memory with uniform sampling.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::ndiff::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Squashed action in `(-1, 1)^k`.
    pub action: Vec<f64>,
    pub action_pre_squash: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True only for terminal states; step-cap truncation still bootstraps.
    pub done: bool,
}

/// Column-stacked minibatch, one row per sampled transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Tensor,
    pub actions: Tensor,
    pub actions_pre_squash: Tensor,
    pub rewards: Vec<f64>,
    pub next_states: Tensor,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(items: &[&Transition]) -> Result<Self> {
        let rows = |f: fn(&Transition) -> &[f64]| {
            Tensor::from_rows(&items.iter().map(|t| f(t)).collect::<Vec<_>>())
        };
        Ok(Self {
            states: rows(|t| &t.state)?,
            actions: rows(|t| &t.action)?,
            actions_pre_squash: rows(|t| &t.action_pre_squash)?,
            rewards: items.iter().map(|t| t.reward).collect(),
            next_states: rows(|t| &t.next_state)?,
            dones: items.iter().map(|t| t.done).collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    items: VecDeque<Transition>,
}

pub const DEFAULT_CAPACITY: usize = 1_000_000;

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid("replay capacity must be positive"));
        }
        Ok(Self {
            capacity,
            state_dim,
            action_dim,
            items: VecDeque::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.state.len() != self.state_dim
            || t.next_state.len() != self.state_dim
            || t.action.len() != self.action_dim
            || t.action_pre_squash.len() != self.action_dim
        {
            return Err(invalid("transition dimensions do not match the buffer"));
        }
        if !t.reward.is_finite() {
            return Err(invalid("non-finite reward"));
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        Ok(())
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::Precondition(
                "cannot sample from an empty replay buffer".into(),
            ));
        }
        Ok((0..batch)
            .map(|_| rng.random_range(0..self.items.len()))
            .collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(batch, rng)?;
        let items: Vec<&Transition> = idx.iter().map(|&i| &self.items[i]).collect();
        Batch::from_transitions(&items)
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// Survivors in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }
}
