//! Discounted reachability value iteration, the comparison baseline.
//!
//! Solves `V(x) = (1-γ) l(x) + γ min{ l(x), max_u E[V(x⁺)] }` on a finite
//! kernel, with `V(K)` pinned to a caller-supplied floor.

use super::mdp::Kernel;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ReachSolution {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl ReachSolution {
    /// Fraction of states with `V > 0`.
    pub fn super_zero_fraction(&self) -> f64 {
        self.values.iter().filter(|&&v| v > 0.0).count() as f64 / self.values.len().max(1) as f64
    }
}

/// The floor used for `V(K)`: `−max |l|`, so the failure state scores as
/// unsafe as the safest state scores safe.
///
/// A floor of zero is not enough. A state that exits with certainty would
/// still get `V = (1-γ) l > 0` and read as safe.
pub fn default_terminal_value(margin: &[f64]) -> f64 {
    -margin.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn discounted_reachability_vi(
    kernel: &Kernel,
    margin: &[f64],
    gamma_discount: f64,
    terminal_value: f64,
    tol: f64,
    max_iters: usize,
) -> Result<ReachSolution> {
    let (n, m) = (kernel.n_states(), kernel.n_actions());
    if margin.len() != n {
        return Err(Error::contract("margin function has the wrong length"));
    }
    if margin.iter().any(|v| !v.is_finite()) || !terminal_value.is_finite() {
        return Err(Error::contract("margin values must be finite"));
    }
    if !(gamma_discount > 0.0 && gamma_discount < 1.0) {
        return Err(Error::validation(format!("discount must lie in (0, 1), got {gamma_discount}")));
    }
    let mut v = margin.to_vec();
    let mut q = vec![0.0; n * m];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        kernel.expect(&v, &mut q);
        residual = 0.0;
        for x in 0..n {
            let mut best = f64::NEG_INFINITY;
            for u in 0..m {
                let r = x * m + u;
                best = best.max(q[r] + kernel.terminal()[r] * terminal_value);
            }
            let l = margin[x];
            let nv = (1.0 - gamma_discount) * l + gamma_discount * l.min(best);
            residual = f64::max(residual, (nv - v[x]).abs());
            v[x] = nv;
        }
        if residual <= tol {
            return Ok(ReachSolution { values: v, iterations: it, residual });
        }
    }
    Err(Error::NonConvergence { iterations: max_iters, residual })
}
