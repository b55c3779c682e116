//! Dominant eigenpairs, exact safety-probability recursion and greedy
//! policy improvement on finite systems.

use super::mdp::{Kernel, LinearOperator, StateActionOperator, TabularPolicy};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub eigenvalue: f64,
    /// Nonnegative, sup-norm one.
    pub eigenvector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// One sup-normalised power step: returns `(‖Aψ‖∞, Aψ / ‖Aψ‖∞)`.
///
/// When `Aψ = 0` the zero vector is returned with eigenvalue zero.
pub fn power_step<Op: LinearOperator + ?Sized>(op: &Op, psi: &[f64]) -> (f64, Vec<f64>) {
    let mut y = vec![0.0; op.dim()];
    op.apply(psi, &mut y);
    let lambda = sup_norm(&y);
    if lambda > 0.0 {
        y.iter_mut().for_each(|v| *v /= lambda);
    }
    (lambda, y)
}

/// Power iteration from the all-ones vector.
pub fn power_iteration<Op: LinearOperator + ?Sized>(op: &Op, tol: f64, max_iters: usize) -> Result<EigenPair> {
    power_iteration_from(op, vec![1.0; op.dim()], tol, max_iters)
}

/// Power iteration with sup-norm normalisation, stopping once the residual
/// `‖Aψ − λψ‖∞` of the current iterate drops to `tol`.
pub fn power_iteration_from<Op: LinearOperator + ?Sized>(
    op: &Op,
    init: Vec<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<EigenPair> {
    let n = op.dim();
    if init.len() != n {
        return Err(Error::contract("initial vector has the wrong dimension"));
    }
    let norm = sup_norm(&init);
    if !(norm > 0.0) {
        return Err(Error::contract("initial vector must be nonzero"));
    }
    let mut psi: Vec<f64> = init.iter().map(|v| v / norm).collect();
    let mut y = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 0..=max_iters {
        op.apply(&psi, &mut y);
        let lambda = sup_norm(&y);
        residual = y.iter().zip(&psi).fold(0.0, |m, (a, b)| m.max((a - lambda * b).abs()));
        if residual <= tol {
            return Ok(EigenPair { eigenvalue: lambda, eigenvector: psi, iterations: it, residual });
        }
        if lambda == 0.0 || it == max_iters {
            break;
        }
        for (p, v) in psi.iter_mut().zip(&y) {
            *p = v / lambda;
        }
    }
    Err(Error::NonConvergence { iterations: max_iters, residual })
}

/// `Z(t) = M^t 1` for `t = 0..=horizon`.
pub fn exact_safety_dp<Op: LinearOperator + ?Sized>(op: &Op, horizon: usize) -> Vec<Vec<f64>> {
    let mut z = Vec::with_capacity(horizon + 1);
    z.push(vec![1.0; op.dim()]);
    for t in 0..horizon {
        let mut next = vec![0.0; op.dim()];
        op.apply(&z[t], &mut next);
        z.push(next);
    }
    z
}

/// Dominant eigenpair of the state-action operator `A_π`.
///
/// The eigenvector is indexed by `x * n_actions + u`.
pub fn state_action_eigpair(
    kernel: &Kernel,
    policy: &TabularPolicy,
    tol: f64,
    max_iters: usize,
) -> Result<EigenPair> {
    let op = StateActionOperator::new(kernel, policy)?;
    power_iteration(&op, tol, max_iters)
}

/// Averages a state-action function over the policy: `Σ_u π(u|x) ψ(x,u)`.
pub fn average_over_policy(psi: &[f64], policy: &TabularPolicy) -> Vec<f64> {
    let m = policy.n_actions();
    (0..policy.n_states())
        .map(|x| (0..m).map(|u| policy.prob(x, u) * psi[x * m + u]).sum())
        .collect()
}

/// `π'(x) = argmax_u ψ(x,u)`, ties to the lowest action index.
pub fn greedy_improve(n_states: usize, n_actions: usize, psi: &[f64]) -> Result<Vec<usize>> {
    if psi.len() != n_states * n_actions {
        return Err(Error::contract("ψ table has the wrong size"));
    }
    if let Some(bad) = psi.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::contract(format!("ψ must be finite and nonnegative, found {bad}")));
    }
    Ok(psi
        .chunks(n_actions)
        .map(|row| {
            let mut best = 0;
            for (u, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = u;
                }
            }
            best
        })
        .collect())
}

/// Result of alternating eigenpair evaluation and greedy improvement.
#[derive(Clone, Debug)]
pub struct ImprovementRun {
    pub policy: Vec<usize>,
    pub eigenpair: EigenPair,
    /// Eigenvalue after each evaluation, starting with the initial policy.
    pub eigenvalues: Vec<f64>,
}

/// Alternates [`state_action_eigpair`] and [`greedy_improve`] until the
/// policy stops changing or `max_rounds` evaluations have run.
pub fn improve_policy(
    kernel: &Kernel,
    init: Vec<usize>,
    tol: f64,
    max_iters: usize,
    max_rounds: usize,
) -> Result<ImprovementRun> {
    let (n, m) = (kernel.n_states(), kernel.n_actions());
    let mut policy = init;
    let mut eigenvalues = Vec::new();
    loop {
        let table = TabularPolicy::deterministic(&policy, m)?;
        let pair = state_action_eigpair(kernel, &table, tol, max_iters)?;
        eigenvalues.push(pair.eigenvalue);
        let next = greedy_improve(n, m, &pair.eigenvector)?;
        if next == policy || eigenvalues.len() >= max_rounds {
            return Ok(ImprovementRun { policy, eigenpair: pair, eigenvalues });
        }
        policy = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::FiniteMdp;

    fn pair() -> FiniteMdp {
        FiniteMdp::from_dense(&[vec![0.1, 0.6], vec![0.6, 0.1]]).unwrap()
    }

    #[test]
    fn symmetric_two_state_chain() {
        let e = power_iteration(&pair(), 1e-13, 1000).unwrap();
        assert!((e.eigenvalue - 0.7).abs() < 1e-12);
        assert!(e.eigenvector.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(e.residual <= 1e-13);
    }

    #[test]
    fn single_state() {
        let m = FiniteMdp::from_dense(&[vec![0.1]]).unwrap();
        let e = power_iteration(&m, 1e-14, 10).unwrap();
        assert!((e.eigenvalue - 0.1).abs() < 1e-15);
        assert_eq!(e.eigenvector, vec![1.0]);
    }

    #[test]
    fn one_power_step_by_hand() {
        let (lambda, psi) = power_step(&pair(), &[1.0, 0.0]);
        assert!((lambda - 0.6).abs() < 1e-15);
        assert!((psi[0] - 1.0 / 6.0).abs() < 1e-15 && psi[1] == 1.0);
    }

    #[test]
    fn periodic_chain_reports_non_convergence() {
        let swap = FiniteMdp::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let r = power_iteration_from(&swap, vec![1.0, 0.5], 1e-10, 200);
        assert!(matches!(r, Err(Error::NonConvergence { iterations: 200, .. })));
    }

    #[test]
    fn dp_examples() {
        let z = exact_safety_dp(&FiniteMdp::from_dense(&[vec![0.1]]).unwrap(), 6);
        for (t, zt) in z.iter().enumerate() {
            assert!((zt[0] - 0.1f64.powi(t as i32)).abs() < 1e-15);
        }
        let z = exact_safety_dp(&pair(), 40);
        for (t, zt) in z.iter().enumerate() {
            let want = 0.7f64.powi(t as i32);
            assert!(zt.iter().all(|v| (v - want).abs() <= 1e-14 * want.max(1e-300)));
        }
    }

    #[test]
    fn greedy_examples() {
        assert_eq!(greedy_improve(3, 1, &[0.2, 0.9, 0.0]).unwrap(), vec![0, 0, 0]);
        let psi = [0.3, 0.3, 0.1, 0.5, 0.7, 0.2];
        assert_eq!(greedy_improve(3, 2, &psi).unwrap(), vec![0, 1, 0]);
        for c in [1e-9, 0.5, 3.0, 1e6] {
            let scaled: Vec<f64> = psi.iter().map(|v| c * v).collect();
            assert_eq!(greedy_improve(3, 2, &scaled).unwrap(), vec![0, 1, 0]);
        }
        assert!(greedy_improve(1, 2, &[0.1, -0.2]).is_err());
        assert!(greedy_improve(1, 2, &[0.1, f64::NAN]).is_err());
        assert!(greedy_improve(2, 2, &[0.1, 0.2]).is_err());
    }
}
