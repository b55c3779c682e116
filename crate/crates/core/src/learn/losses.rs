//! Training objectives and their exact (semi-)gradients.
//!
//! * `J_eig = (W_λ/|B|) Σ (ψ(x⁺,u⁺) − λψ(x,u))² + W_n (max_B ψ(x,u) − 1)²`
//!   with `u⁺ = π(x⁺)` and `ψ(K, ·) = 0`. The bootstrapped term
//!   `ψ(x⁺,u⁺)` is a constant for differentiation, and the max term sends
//!   its gradient to the first maximising element only.
//! * `J_+ = (W_+/|B|) Σ ReLU(−ψ(x,u))`
//! * `J_policy = −(1/|B|) Σ ψ(x, π(x))`, differentiated through the action
//!   into the policy parameters only.
//! * `J_φ = (1/|B|) Σ (φ(x) − ψ(x, π(x)))²` with ψ and π frozen.

use super::model::EigenModel;
use crate::dataset::TransitionTuple;
use crate::error::{Error, Result};
use crate::nn::Tape;

#[derive(Clone, Debug, PartialEq)]
pub struct EigLoss {
    /// `J_eig + J_+` as weighted.
    pub value: f64,
    pub j_eig: f64,
    pub j_plus: f64,
    pub grad_psi: Vec<f64>,
    pub grad_lambda: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct PsiWeights {
    pub w_lambda: f64,
    pub w_n: f64,
    pub w_plus: f64,
}

/// Reusable buffers so the training loop does not allocate per sample.
#[derive(Default)]
pub(crate) struct Scratch {
    tapes: Vec<Tape>,
    aux: Tape,
    input: Vec<f64>,
    action: Vec<f64>,
    slope: Vec<f64>,
    in_grad: Vec<f64>,
    psi: Vec<f64>,
}

fn non_empty(batch: &[&TransitionTuple]) -> Result<()> {
    if batch.is_empty() {
        Err(Error::contract("loss evaluated on an empty batch"))
    } else {
        Ok(())
    }
}

fn concat(buf: &mut Vec<f64>, a: &[f64], b: &[f64]) {
    buf.clear();
    buf.extend_from_slice(a);
    buf.extend_from_slice(b);
}

/// Bootstrapped targets `ψ(x⁺, π(x⁺))`, zero for terminal successors.
pub fn eig_targets(model: &EigenModel, batch: &[&TransitionTuple]) -> Result<Vec<f64>> {
    eig_targets_with(model, batch, &mut Scratch::default())
}

pub(crate) fn eig_targets_with(model: &EigenModel, batch: &[&TransitionTuple], s: &mut Scratch) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|t| {
            if t.next_state.terminal {
                Ok(0.0)
            } else {
                model.psi_of_policy(&t.next_state.coords, &mut s.aux, &mut s.input)
            }
        })
        .collect()
}

pub(crate) fn psi_objective(
    model: &EigenModel,
    batch: &[&TransitionTuple],
    targets: &[f64],
    w: PsiWeights,
    s: &mut Scratch,
) -> Result<EigLoss> {
    non_empty(batch)?;
    if targets.len() != batch.len() {
        return Err(Error::contract("one target per batch element required"));
    }
    let n = batch.len();
    let inv = 1.0 / n as f64;
    let lambda = model.lambda;
    if s.tapes.len() < n {
        s.tapes.resize_with(n, Tape::default);
    }
    s.psi.clear();
    for (t, tape) in batch.iter().zip(s.tapes.iter_mut()) {
        concat(&mut s.input, &t.state.coords, &t.action.coords);
        s.psi.push(model.psi_net.forward_tape(&s.input, tape)?[0]);
    }
    let (mut arg, mut max) = (0, s.psi[0]);
    for (i, &v) in s.psi.iter().enumerate().skip(1) {
        if v > max {
            arg = i;
            max = v;
        }
    }
    let mut sq = 0.0;
    let mut neg = 0.0;
    let mut grad_lambda = 0.0;
    let mut grad_psi = vec![0.0; model.psi_net.n_params()];
    for i in 0..n {
        let psi = s.psi[i];
        let r = targets[i] - lambda * psi;
        sq += r * r;
        grad_lambda += -2.0 * r * psi;
        let mut up = -2.0 * w.w_lambda * inv * lambda * r;
        if psi < 0.0 {
            neg -= psi;
            up -= w.w_plus * inv;
        }
        if i == arg {
            up += 2.0 * w.w_n * (max - 1.0);
        }
        if up != 0.0 {
            model.psi_net.backward_tape(&mut s.tapes[i], &[up], Some(&mut grad_psi), None)?;
        }
    }
    let j_eig = w.w_lambda * inv * sq + w.w_n * (max - 1.0).powi(2);
    let j_plus = w.w_plus * inv * neg;
    Ok(EigLoss { value: j_eig + j_plus, j_eig, j_plus, grad_psi, grad_lambda: w.w_lambda * inv * grad_lambda })
}

/// `J_eig` and its semi-gradient with respect to `(ψ, λ)`.
pub fn eig_loss(model: &EigenModel, batch: &[&TransitionTuple], w_lambda: f64, w_n: f64) -> Result<EigLoss> {
    non_empty(batch)?;
    let mut s = Scratch::default();
    let targets = eig_targets_with(model, batch, &mut s)?;
    psi_objective(model, batch, &targets, PsiWeights { w_lambda, w_n, w_plus: 0.0 }, &mut s)
}

/// `J_eig` with externally fixed targets; the gradient is then exact for
/// the loss as a function of `(ψ, λ)`.
pub fn eig_loss_with_targets(
    model: &EigenModel,
    batch: &[&TransitionTuple],
    targets: &[f64],
    w_lambda: f64,
    w_n: f64,
) -> Result<EigLoss> {
    psi_objective(model, batch, targets, PsiWeights { w_lambda, w_n, w_plus: 0.0 }, &mut Scratch::default())
}

/// `J_+` and its gradient with respect to ψ.
pub fn pos_loss(model: &EigenModel, batch: &[&TransitionTuple], w_plus: f64) -> Result<LossGrad> {
    let zeros = vec![0.0; batch.len()];
    let l = psi_objective(
        model,
        batch,
        &zeros,
        PsiWeights { w_lambda: 0.0, w_n: 0.0, w_plus },
        &mut Scratch::default(),
    )?;
    Ok(LossGrad { value: l.j_plus, grad: l.grad_psi })
}

pub(crate) fn policy_objective(model: &EigenModel, batch: &[&TransitionTuple], s: &mut Scratch) -> Result<LossGrad> {
    non_empty(batch)?;
    let inv = 1.0 / batch.len() as f64;
    let d = model.state_dim();
    let mut grad = vec![0.0; model.policy_net.n_params()];
    let mut total = 0.0;
    let mut pol_tape = std::mem::take(&mut s.aux);
    let mut psi_tape = s.tapes.pop().unwrap_or_default();
    for t in batch {
        let x = &t.state.coords;
        let raw = model.policy_net.forward_tape(x, &mut pol_tape)?;
        model.squash(raw, &mut s.action);
        model.squash_slope(raw, &mut s.slope);
        concat(&mut s.input, x, &s.action);
        total += model.psi_net.forward_tape(&s.input, &mut psi_tape)?[0];
        s.in_grad.clear();
        s.in_grad.resize(s.input.len(), 0.0);
        model.psi_net.backward_tape(&mut psi_tape, &[-inv], None, Some(&mut s.in_grad))?;
        let dz: Vec<f64> = s.in_grad[d..].iter().zip(&s.slope).map(|(g, k)| g * k).collect();
        model.policy_net.backward_tape(&mut pol_tape, &dz, Some(&mut grad), None)?;
    }
    s.aux = pol_tape;
    s.tapes.push(psi_tape);
    Ok(LossGrad { value: -total * inv, grad })
}

/// `J_policy` and its gradient with respect to the policy parameters.
pub fn policy_loss(model: &EigenModel, batch: &[&TransitionTuple]) -> Result<LossGrad> {
    policy_objective(model, batch, &mut Scratch::default())
}

pub(crate) fn phi_objective(model: &EigenModel, batch: &[&TransitionTuple], s: &mut Scratch) -> Result<LossGrad> {
    non_empty(batch)?;
    let phi = model.phi_net.as_ref().ok_or_else(|| Error::contract("model has no φ network"))?;
    let inv = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; phi.n_params()];
    let mut total = 0.0;
    let mut tape = s.tapes.pop().unwrap_or_default();
    for t in batch {
        let x = &t.state.coords;
        let target = model.psi_of_policy(x, &mut s.aux, &mut s.input)?;
        let r = phi.forward_tape(x, &mut tape)?[0] - target;
        total += r * r;
        phi.backward_tape(&mut tape, &[2.0 * inv * r], Some(&mut grad), None)?;
    }
    s.tapes.push(tape);
    Ok(LossGrad { value: total * inv, grad })
}

/// `J_φ` and its gradient with respect to the φ parameters.
pub fn phi_loss(model: &EigenModel, batch: &[&TransitionTuple]) -> Result<LossGrad> {
    phi_objective(model, batch, &mut Scratch::default())
}
