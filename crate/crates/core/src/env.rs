//! Environment abstraction with a single absorbing failure state.
//!
//! A state is either a point of the safe set `C` or the terminal state `K`.
//! `K` is a flag, not a coordinate value: its coordinates are all zero and
//! ignored by every consumer. Once a trajectory reaches `K` it stays there.

use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub coords: Vec<f64>,
    pub terminal: bool,
}

impl StateVector {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords, terminal: false }
    }

    /// The unsafe state `K` in canonical encoding.
    pub fn terminal(dim: usize) -> Self {
        Self { coords: vec![0.0; dim], terminal: true }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionVector {
    pub coords: Vec<f64>,
}

impl ActionVector {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn scalar(a: f64) -> Self {
        Self { coords: vec![a] }
    }
}

/// Dimensions and action box of an environment.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_bounds: Vec<(f64, f64)>,
    pub dt: Option<f64>,
}

impl EnvSpec {
    pub fn new(state_dim: usize, action_bounds: Vec<(f64, f64)>, dt: Option<f64>) -> Result<Self> {
        if state_dim == 0 || action_bounds.is_empty() {
            return Err(Error::validation("state and action dimensions must be at least 1"));
        }
        for (i, &(lo, hi)) in action_bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::validation(format!(
                    "action interval {i} is degenerate: [{lo}, {hi}]"
                )));
            }
        }
        if let Some(dt) = dt {
            if !(dt > 0.0) {
                return Err(Error::validation(format!("dt must be positive, got {dt}")));
            }
        }
        Ok(Self { state_dim, action_dim: action_bounds.len(), action_bounds, dt })
    }
}

/// A stochastic system with an analytic safe-set predicate.
///
/// Implementors provide the raw successor map and the predicate. Validation
/// and the absorbing rule live in [`env_step`], so every environment gets
/// them for free.
pub trait Environment: Send + Sync {
    fn id(&self) -> &str;

    fn spec(&self) -> &EnvSpec;

    /// Membership in `C`. Coordinates have already been dimension-checked.
    fn contains(&self, coords: &[f64]) -> bool;

    /// Successor coordinates before the safe-set check.
    fn transition(&self, state: &[f64], action: &[f64], rng: &mut SimRng) -> Vec<f64>;

    /// Axis-aligned box enclosing `C`, used for rejection sampling.
    fn sampling_box(&self) -> Vec<(f64, f64)>;

    /// Which state coordinates wrap around their sampling interval.
    fn periodic_dims(&self) -> Vec<bool> {
        vec![false; self.spec().state_dim]
    }

    /// Checks an action against the environment's bounds.
    fn check_action(&self, action: &[f64]) -> Result<()> {
        let spec = self.spec();
        if action.len() != spec.action_dim {
            return Err(Error::contract(format!(
                "action has {} entries, environment expects {}",
                action.len(),
                spec.action_dim
            )));
        }
        for (i, (&a, &(lo, hi))) in action.iter().zip(&spec.action_bounds).enumerate() {
            if !(lo..=hi).contains(&a) {
                return Err(Error::validation(format!(
                    "action[{i}] = {a} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Samples an action uniformly from the action box.
    fn sample_action(&self, rng: &mut SimRng) -> ActionVector {
        let coords = self
            .spec()
            .action_bounds
            .iter()
            .map(|&(lo, hi)| rng.uniform_in(lo, hi))
            .collect();
        ActionVector::new(coords)
    }

    /// Samples a state uniformly from `C` by rejection against [`Environment::contains`].
    fn sample_safe_state(&self, rng: &mut SimRng) -> StateVector {
        let bounds = self.sampling_box();
        loop {
            let coords: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.uniform_in(lo, hi)).collect();
            if self.contains(&coords) {
                return StateVector::new(coords);
            }
        }
    }
}

/// Membership test for `C` with a dimension check.
pub fn env_is_safe(env: &dyn Environment, coords: &[f64]) -> Result<bool> {
    let d = env.spec().state_dim;
    if coords.len() != d {
        return Err(Error::contract(format!(
            "state has {} coordinates, {} expects {d}",
            coords.len(),
            env.id()
        )));
    }
    Ok(env.contains(coords))
}

/// One transition of the closed system, mapping exits from `C` to `K`.
pub fn env_step(
    env: &dyn Environment,
    state: &StateVector,
    action: &ActionVector,
    rng: &mut SimRng,
) -> Result<StateVector> {
    if state.terminal {
        return Err(Error::contract("cannot step from the terminal state"));
    }
    let d = env.spec().state_dim;
    if state.dim() != d {
        return Err(Error::contract(format!(
            "state has {} coordinates, {} expects {d}",
            state.dim(),
            env.id()
        )));
    }
    env.check_action(&action.coords)?;
    let next = env.transition(&state.coords, &action.coords, rng);
    if env.contains(&next) {
        Ok(StateVector::new(next))
    } else {
        Ok(StateVector::terminal(d))
    }
}

/// Maps states to actions. Stochastic policies draw from the supplied stream.
pub trait Policy {
    fn act(&self, state: &StateVector, rng: &mut SimRng) -> ActionVector;
}

impl<F> Policy for F
where
    F: Fn(&StateVector) -> ActionVector,
{
    fn act(&self, state: &StateVector, _rng: &mut SimRng) -> ActionVector {
        self(state)
    }
}

/// Uniform random actions over the environment's action box.
pub struct UniformPolicy<'a> {
    pub env: &'a dyn Environment,
}

impl Policy for UniformPolicy<'_> {
    fn act(&self, _state: &StateVector, rng: &mut SimRng) -> ActionVector {
        self.env.sample_action(rng)
    }
}

/// Closed-loop trajectory from `x0`, truncated at the first terminal state.
///
/// The returned vector holds at most `horizon + 1` states. Policy and
/// dynamics draw from the same stream.
pub fn rollout(
    env: &dyn Environment,
    policy: &dyn Policy,
    x0: &StateVector,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<Vec<StateVector>> {
    if x0.terminal {
        return Err(Error::contract("rollout must start from a safe state"));
    }
    let mut traj = Vec::with_capacity(horizon + 1);
    traj.push(x0.clone());
    let mut state = x0.clone();
    for _ in 0..horizon {
        let action = policy.act(&state, rng);
        state = env_step(env, &state, &action, rng)?;
        let stop = state.terminal;
        traj.push(state.clone());
        if stop {
            break;
        }
    }
    Ok(traj)
}

/// Empirical `Z(t, x0)` for `t = 0..=horizon`.
///
/// Episode `i` uses stream `i` of `seed`, so the estimate does not depend on
/// the order in which episodes are run.
pub fn estimate_safety_probability(
    env: &dyn Environment,
    policy: &dyn Policy,
    x0: &StateVector,
    horizon: usize,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_episodes == 0 {
        return Err(Error::contract("n_episodes must be at least 1"));
    }
    let mut alive = vec![0usize; horizon + 1];
    for ep in 0..n_episodes {
        let mut rng = SimRng::stream(seed, ep as u64);
        let traj = rollout(env, policy, x0, horizon, &mut rng)?;
        for (t, s) in traj.iter().enumerate() {
            if !s.terminal {
                alive[t] += 1;
            }
        }
    }
    Ok(alive.into_iter().map(|c| c as f64 / n_episodes as f64).collect())
}
