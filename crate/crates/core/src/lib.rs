//! Safety analysis of stochastic control systems through the dominant
//! eigenpair of the safety-probability operator.
//!
//! The operator maps a function on the safe set to its one-step
//! closed-loop expectation, with the failure state absorbing. Its dominant
//! eigenvalue is the asymptotic per-step survival rate of the closed loop
//! and its eigenfunction ranks states (or state-action pairs) by relative
//! safety.
//!
//! * [`tabular`] computes these objects exactly for finite systems.
//! * [`learn`] learns them offline from transition data together with a
//!   backup policy, using the networks in [`nn`].
//! * [`filter`] turns a learned model into a runtime safety filter.
//! * [`envs`] holds the continuous benchmarks and their grid oracles.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod env;
pub mod envs;
pub mod error;
pub mod filter;
pub mod learn;
pub mod nn;
pub mod rng;
pub mod tabular;

pub use dataset::{collect_uniform, Dataset, TransitionTuple};
pub use env::{
    env_is_safe, env_step, estimate_safety_probability, rollout, ActionVector, EnvSpec, Environment, Policy,
    StateVector, UniformPolicy,
};
pub use error::{Error, Result};
pub use rng::SimRng;
