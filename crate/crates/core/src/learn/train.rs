use std::fmt::Write as _;

use super::losses::{eig_targets_with, phi_objective, policy_objective, psi_objective, PsiWeights, Scratch};
use super::model::EigenModel;
use crate::config::KeyValues;
use crate::dataset::{Dataset, TransitionTuple};
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::nn::AdamState;
use crate::rng::SimRng;

/// Hyperparameters of the joint training loop. Defaults are the double
/// integrator settings; [`TrainConfig::dubins`] holds the Dubins car ones.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub w_lambda: f64,
    pub w_n: f64,
    pub w_plus: f64,
    pub lr_psi: f64,
    pub lr_policy: f64,
    pub batch_size: usize,
    pub n_steps: usize,
    pub lambda_init: f64,
    pub seed: u64,
    pub psi_hidden: usize,
    pub policy_hidden: usize,
    /// Gradient steps for the optional φ regression after the main loop.
    pub phi_steps: usize,
    pub lr_phi: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            w_lambda: 3.0,
            w_n: 1.0,
            w_plus: 1.0,
            lr_psi: 3e-4,
            lr_policy: 2e-3,
            batch_size: 2048,
            n_steps: 4000,
            lambda_init: 1.0,
            seed: 0,
            psi_hidden: 128,
            policy_hidden: 16,
            phi_steps: 0,
            lr_phi: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn dubins() -> Self {
        Self { batch_size: 10_000, lr_psi: 1e-3, n_steps: 5000, ..Self::default() }
    }

    pub const KEYS: [&'static str; 13] = [
        "w_lambda",
        "w_n",
        "w_plus",
        "lr_psi",
        "lr_policy",
        "batch_size",
        "n_steps",
        "lambda_init",
        "seed",
        "psi_hidden",
        "policy_hidden",
        "phi_steps",
        "lr_phi",
    ];

    /// Overrides fields from `kv`, consuming the keys it recognises.
    pub fn apply(mut self, kv: &mut KeyValues) -> Result<Self> {
        self.w_lambda = kv.take_or("w_lambda", self.w_lambda)?;
        self.w_n = kv.take_or("w_n", self.w_n)?;
        self.w_plus = kv.take_or("w_plus", self.w_plus)?;
        self.lr_psi = kv.take_or("lr_psi", self.lr_psi)?;
        self.lr_policy = kv.take_or("lr_policy", self.lr_policy)?;
        self.batch_size = kv.take_or("batch_size", self.batch_size)?;
        self.n_steps = kv.take_or("n_steps", self.n_steps)?;
        self.lambda_init = kv.take_or("lambda_init", self.lambda_init)?;
        self.seed = kv.take_or("seed", self.seed)?;
        self.psi_hidden = kv.take_or("psi_hidden", self.psi_hidden)?;
        self.policy_hidden = kv.take_or("policy_hidden", self.policy_hidden)?;
        self.phi_steps = kv.take_or("phi_steps", self.phi_steps)?;
        self.lr_phi = kv.take_or("lr_phi", self.lr_phi)?;
        self.validate()?;
        Ok(self)
    }

    /// Parses a complete config file; unknown keys are errors.
    pub fn from_text(text: &str, base: Self) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let cfg = base.apply(&mut kv)?;
        kv.finish()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let vals = [
            self.w_lambda.to_string(),
            self.w_n.to_string(),
            self.w_plus.to_string(),
            self.lr_psi.to_string(),
            self.lr_policy.to_string(),
            self.batch_size.to_string(),
            self.n_steps.to_string(),
            self.lambda_init.to_string(),
            self.seed.to_string(),
            self.psi_hidden.to_string(),
            self.policy_hidden.to_string(),
            self.phi_steps.to_string(),
            self.lr_phi.to_string(),
        ];
        for (k, v) in Self::KEYS.iter().zip(vals) {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [self.w_lambda, self.w_n, self.w_plus];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::validation("loss weights must be nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        if [self.lr_psi, self.lr_policy, self.lr_phi].iter().any(|lr| !(*lr > 0.0)) {
            return Err(Error::validation("learning rates must be positive"));
        }
        if !(self.lambda_init > 0.0) {
            return Err(Error::validation("lambda_init must be positive"));
        }
        if self.psi_hidden == 0 || self.policy_hidden == 0 {
            return Err(Error::validation("hidden widths must be positive"));
        }
        Ok(())
    }

    fn psi_weights(&self) -> PsiWeights {
        PsiWeights { w_lambda: self.w_lambda, w_n: self.w_n, w_plus: self.w_plus }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub j_eig: f64,
    pub j_plus: f64,
    pub j_policy: f64,
    pub lambda: f64,
}

/// Record 0 evaluates the initial model; record `k` holds the losses seen
/// during step `k` and λ after it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,j_eig,j_plus,j_policy,lambda\n");
        for r in &self.records {
            writeln!(
                s,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.step, r.j_eig, r.j_plus, r.j_policy, r.lambda
            )
            .unwrap();
        }
        s
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.lambda).collect()
    }
}

fn check_finite(step: usize, what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { step, what: what.to_string() })
    }
}

/// Joint offline training of `(λ, ψ)` and the backup policy.
///
/// Each step draws a minibatch uniformly with replacement (stream 3 of the
/// seed), updates `(ψ, λ)` with one Adam step on `J_eig + J_+`, then
/// updates π with one Adam step on `J_policy` against the new ψ.
pub fn train(dataset: &Dataset, spec: &EnvSpec, cfg: &TrainConfig) -> Result<(EigenModel, TrainLog)> {
    dataset.validate()?;
    cfg.validate()?;
    if dataset.state_dim() != spec.state_dim || dataset.action_dim() != spec.action_dim {
        return Err(Error::contract("dataset dimensions do not match the environment"));
    }
    let mut model = EigenModel::new(
        spec.state_dim,
        spec.action_bounds.clone(),
        &[cfg.psi_hidden],
        &[cfg.policy_hidden],
        cfg.phi_steps > 0,
        cfg.lambda_init,
        cfg.seed,
    )?;
    let weights = cfg.psi_weights();
    let mut scratch = Scratch::default();
    let mut log = TrainLog::default();

    let head: Vec<&TransitionTuple> = dataset.tuples.iter().take(cfg.batch_size).collect();
    let targets = eig_targets_with(&model, &head, &mut scratch)?;
    let l = psi_objective(&model, &head, &targets, weights, &mut scratch)?;
    let p = policy_objective(&model, &head, &mut scratch)?;
    log.records.push(TrainRecord { step: 0, j_eig: l.j_eig, j_plus: l.j_plus, j_policy: p.value, lambda: model.lambda });

    let n_psi = model.psi_net.n_params();
    let mut adam_psi = AdamState::new(n_psi + 1, cfg.lr_psi);
    let mut adam_pol = AdamState::new(model.policy_net.n_params(), cfg.lr_policy);
    let mut theta = vec![0.0; n_psi + 1];
    let mut grad = vec![0.0; n_psi + 1];
    let mut rng = SimRng::stream(cfg.seed, 3);
    let mut batch: Vec<&TransitionTuple> = Vec::with_capacity(cfg.batch_size);

    for step in 1..=cfg.n_steps {
        batch.clear();
        batch.extend((0..cfg.batch_size).map(|_| &dataset.tuples[rng.index(dataset.len())]));

        let targets = eig_targets_with(&model, &batch, &mut scratch)?;
        let l = psi_objective(&model, &batch, &targets, weights, &mut scratch)?;
        check_finite(step, "J_eig", l.j_eig)?;
        check_finite(step, "J_+", l.j_plus)?;
        theta[..n_psi].copy_from_slice(model.psi_net.params());
        theta[n_psi] = model.lambda;
        grad[..n_psi].copy_from_slice(&l.grad_psi);
        grad[n_psi] = l.grad_lambda;
        adam_psi.step(&mut theta, &grad).map_err(|e| at_step(e, step))?;
        model.psi_net.params_mut().copy_from_slice(&theta[..n_psi]);
        model.lambda = theta[n_psi];
        if !(model.lambda > 0.0) {
            return Err(Error::NonFinite { step, what: format!("lambda left (0, ∞): {}", model.lambda) });
        }

        let p = policy_objective(&model, &batch, &mut scratch)?;
        check_finite(step, "J_policy", p.value)?;
        adam_pol.step(model.policy_net.params_mut(), &p.grad).map_err(|e| at_step(e, step))?;

        log.records.push(TrainRecord { step, j_eig: l.j_eig, j_plus: l.j_plus, j_policy: p.value, lambda: model.lambda });
    }

    if cfg.phi_steps > 0 {
        train_phi(&mut model, dataset, cfg.phi_steps, cfg.lr_phi, cfg.batch_size, cfg.seed)?;
    }
    Ok((model, log))
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::NonFinite { what, .. } => Error::NonFinite { step, what },
        other => other,
    }
}

/// Regresses φ onto `ψ(x, π(x))` with ψ and π frozen. Minibatches come
/// from stream 4 of `seed`. Returns the per-step losses.
pub fn train_phi(
    model: &mut EigenModel,
    dataset: &Dataset,
    steps: usize,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    dataset.validate()?;
    let n = model.phi_net.as_ref().ok_or_else(|| Error::contract("model has no φ network"))?.n_params();
    let mut adam = AdamState::new(n, lr);
    let mut rng = SimRng::stream(seed, 4);
    let mut scratch = Scratch::default();
    let mut losses = Vec::with_capacity(steps);
    let mut batch: Vec<&TransitionTuple> = Vec::with_capacity(batch_size);
    for step in 1..=steps {
        batch.clear();
        batch.extend((0..batch_size).map(|_| &dataset.tuples[rng.index(dataset.len())]));
        let l = phi_objective(model, &batch, &mut scratch)?;
        check_finite(step, "J_phi", l.value)?;
        let phi = model.phi_net.as_mut().expect("checked above");
        adam.step(phi.params_mut(), &l.grad).map_err(|e| at_step(e, step))?;
        losses.push(l.value);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::collect_uniform;
    use crate::env::Environment;
    use crate::envs::{DoubleIntegrator, DoubleIntegratorParams};

    fn small() -> TrainConfig {
        TrainConfig { batch_size: 64, n_steps: 30, psi_hidden: 16, policy_hidden: 4, seed: 5, ..Default::default() }
    }

    fn data() -> (DoubleIntegrator, Dataset) {
        let env = DoubleIntegrator::new(DoubleIntegratorParams::default()).unwrap();
        let d = collect_uniform(&env, 500, 3).unwrap();
        (env, d)
    }

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.n_steps), (2048, 4000));
        assert_eq!((c.lr_psi, c.lr_policy), (3e-4, 2e-3));
        assert_eq!((c.w_lambda, c.w_n, c.w_plus, c.lambda_init), (3.0, 1.0, 1.0, 1.0));
        assert_eq!((c.psi_hidden, c.policy_hidden), (128, 16));
        let d = TrainConfig::dubins();
        assert_eq!((d.batch_size, d.n_steps, d.lr_psi, d.lr_policy), (10_000, 5000, 1e-3, 2e-3));
    }

    #[test]
    fn config_text_round_trip_and_unknown_keys() {
        let c = TrainConfig { seed: 17, lr_psi: 1.25e-4, ..TrainConfig::dubins() };
        assert_eq!(TrainConfig::from_text(&c.to_text(), TrainConfig::default()).unwrap(), c);
        assert!(TrainConfig::from_text("n_step = 3\n", TrainConfig::default()).is_err());
        assert!(TrainConfig::from_text("batch_size = 0\n", TrainConfig::default()).is_err());
        assert!(TrainConfig::from_text("lambda_init = -1\n", TrainConfig::default()).is_err());
    }

    #[test]
    fn zero_steps_returns_the_initial_model() {
        let (env, d) = data();
        let cfg = TrainConfig { n_steps: 0, ..small() };
        let (m, log) = train(&d, env.spec(), &cfg).unwrap();
        let init = EigenModel::new(2, env.spec().action_bounds.clone(), &[16], &[4], false, 1.0, 5).unwrap();
        assert_eq!(m, init);
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.records[0].step, 0);
        assert_eq!(log.records[0].lambda, 1.0);
    }

    #[test]
    fn training_is_deterministic_and_logs_every_step() {
        let (env, d) = data();
        let (a, la) = train(&d, env.spec(), &small()).unwrap();
        let (b, lb) = train(&d, env.spec(), &small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(la.to_csv(), lb.to_csv());
        assert_eq!(la.records.len(), 31);
        assert!(la.records.iter().enumerate().all(|(i, r)| r.step == i));
        assert_eq!(la.lambdas().last().copied(), Some(a.lambda));
    }

    #[test]
    fn non_finite_loss_reports_the_step() {
        let (env, d) = data();
        let cfg = TrainConfig { w_lambda: 1e308, ..small() };
        match train(&d, env.spec(), &cfg) {
            Err(Error::NonFinite { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected a non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (_, d) = data();
        let spec = EnvSpec::new(3, vec![(-1.0, 1.0)], None).unwrap();
        assert!(matches!(train(&d, &spec, &small()), Err(Error::Contract(_))));
    }

    #[test]
    fn phi_regression_closes_the_gap() {
        let (env, d) = data();
        let cfg = TrainConfig { n_steps: 50, phi_steps: 6000, lr_phi: 1e-3, batch_size: 256, psi_hidden: 64, ..small() };
        let (m, _) = train(&d, env.spec(), &cfg).unwrap();
        let mut gap = 0.0;
        for t in &d.tuples {
            let x = &t.state.coords;
            let target = m.psi(x, &m.act(x).unwrap()).unwrap();
            gap += (m.phi(x).unwrap() - target).powi(2);
        }
        gap /= d.len() as f64;
        assert!(gap < 1e-4, "mean squared gap {gap}");
    }
}
