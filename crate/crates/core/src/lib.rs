//! Capacity-limited reinforcement learning laboratory.
//!
//! The crate bundles everything needed to train and compare three
//! actor-critic learners on small continuous-control tasks:
//!
//! - [`ndiff`]: fixed-architecture ReLU MLPs with hand-derived backward
//!   passes, Adam and Polyak averaging.
//! - [`distrib`]: diagonal Gaussians, tanh squashing, mutual-information
//!   estimators and the online marginal-action estimate.
//! - [`envs`]: the continuous N-chain and a randomizable pendulum.
//! - [`replay`]: bounded uniform experience memory.
//! - [`agents`]: CLAC, SAC and MIRL sharing one value/twin-Q/policy scaffold.
//! - [`harness`]: seeded multi-run experiments, generalization evaluation,
//!   aggregation, coefficient sweeps, CSV metrics and SVG plots.

pub mod agents;
pub mod distrib;
pub mod envs;
pub mod error;
pub mod harness;
pub mod ndiff;
pub mod replay;
pub mod seed;

pub use error::{Error, Result};
