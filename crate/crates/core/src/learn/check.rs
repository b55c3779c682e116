use super::losses::{eig_loss_with_targets, eig_targets, phi_loss, policy_loss, pos_loss};
use super::model::EigenModel;
use crate::dataset::TransitionTuple;
use crate::env::{ActionVector, StateVector};
use crate::error::Result;
use crate::nn::grad_check;
use crate::rng::SimRng;

/// Worst relative error between analytic and central-difference gradients
/// for each loss, over all trials.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossCheckReport {
    pub trials: usize,
    pub j_eig: f64,
    pub j_plus: f64,
    pub j_policy: f64,
    pub j_phi: f64,
}

impl LossCheckReport {
    pub fn max(&self) -> f64 {
        self.j_eig.max(self.j_plus).max(self.j_policy).max(self.j_phi)
    }
}

fn random_batch(model: &EigenModel, n: usize, rng: &mut SimRng) -> Result<Vec<TransitionTuple>> {
    let d = model.state_dim();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let s: Vec<f64> = (0..d).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let a: Vec<f64> = model.action_bounds.iter().map(|&(lo, hi)| rng.uniform_in(lo, hi)).collect();
        let next = if rng.uniform() < 0.25 {
            StateVector::terminal(d)
        } else {
            StateVector::new((0..d).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
        };
        out.push(TransitionTuple::new(StateVector::new(s), ActionVector::new(a), next)?);
    }
    Ok(out)
}

fn random_model(rng: &mut SimRng, seed: u64) -> Result<EigenModel> {
    let d = 2 + rng.index(2);
    let k = 1 + rng.index(2);
    let bounds = (0..k)
        .map(|_| {
            let lo = rng.uniform_in(-1.5, -0.1);
            (lo, lo + rng.uniform_in(0.2, 2.0))
        })
        .collect();
    let lambda = rng.uniform_in(0.5, 1.5);
    EigenModel::new(d, bounds, &[8], &[6], true, lambda, seed)
}

/// Central-difference check of `J_eig` (targets frozen), `J_+`,
/// `J_policy` and `J_φ` on `trials` random models and minibatches.
pub fn loss_gradient_check(trials: usize, seed: u64) -> Result<LossCheckReport> {
    const H: f64 = 1e-5;
    let mut report = LossCheckReport { trials, ..Default::default() };
    for trial in 0..trials {
        let mut rng = SimRng::stream(seed, 1000 + trial as u64);
        let mut model = random_model(&mut rng, seed.wrapping_add(trial as u64))?;
        let tuples = random_batch(&model, 12, &mut rng)?;
        let batch: Vec<&TransitionTuple> = tuples.iter().collect();

        // Shift ψ so that part of the batch is negative and J_+ is active.
        let mut vals: Vec<f64> = batch
            .iter()
            .map(|t| model.psi(&t.state.coords, &t.action.coords))
            .collect::<Result<_>>()?;
        vals.sort_by(f64::total_cmp);
        let last = model.psi_net.n_layers() - 1;
        let b = model.psi_net.params()[model.psi_net.bias_index(last, 0)];
        model.psi_net.set_bias(last, 0, b - vals[vals.len() / 2] + 1e-3);

        let targets = eig_targets(&model, &batch)?;
        let (wl, wn, wp) = (rng.uniform_in(0.5, 3.0), rng.uniform_in(0.5, 2.0), rng.uniform_in(0.5, 2.0));
        let l = eig_loss_with_targets(&model, &batch, &targets, wl, wn)?;
        let mut theta = model.psi_net.params().to_vec();
        theta.push(model.lambda);
        let mut analytic = l.grad_psi.clone();
        analytic.push(l.grad_lambda);
        let np = model.psi_net.n_params();
        let err = grad_check(
            &theta,
            &analytic,
            |p| {
                let mut m = model.clone();
                m.psi_net.params_mut().copy_from_slice(&p[..np]);
                m.lambda = p[np];
                eig_loss_with_targets(&m, &batch, &targets, wl, wn).map(|l| l.j_eig).unwrap_or(f64::NAN)
            },
            H,
        );
        report.j_eig = report.j_eig.max(err);

        let g = pos_loss(&model, &batch, wp)?;
        let err = grad_check(
            model.psi_net.params(),
            &g.grad,
            |p| {
                let mut m = model.clone();
                m.psi_net.params_mut().copy_from_slice(p);
                pos_loss(&m, &batch, wp).map(|l| l.value).unwrap_or(f64::NAN)
            },
            H,
        );
        report.j_plus = report.j_plus.max(err);

        let g = policy_loss(&model, &batch)?;
        let err = grad_check(
            model.policy_net.params(),
            &g.grad,
            |p| {
                let mut m = model.clone();
                m.policy_net.params_mut().copy_from_slice(p);
                policy_loss(&m, &batch).map(|l| l.value).unwrap_or(f64::NAN)
            },
            H,
        );
        report.j_policy = report.j_policy.max(err);

        let g = phi_loss(&model, &batch)?;
        let phi_params = model.phi_net.as_ref().expect("random models carry φ").params().to_vec();
        let err = grad_check(
            &phi_params,
            &g.grad,
            |p| {
                let mut m = model.clone();
                m.phi_net.as_mut().unwrap().params_mut().copy_from_slice(p);
                phi_loss(&m, &batch).map(|l| l.value).unwrap_or(f64::NAN)
            },
            H,
        );
        report.j_phi = report.j_phi.max(err);
    }
    Ok(report)
}
