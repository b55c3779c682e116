use crate::env::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq)]
pub struct DoubleIntegratorParams {
    pub dt: f64,
    /// Scale of the shared Gaussian disturbance.
    pub sigma: f64,
    pub max_accel: f64,
    /// Half-width of the safe box `[-b, b]²`.
    pub bound: f64,
}

impl Default for DoubleIntegratorParams {
    fn default() -> Self {
        Self { dt: 0.05, sigma: 1.0, max_accel: 0.5, bound: 1.0 }
    }
}

/// `s⁺ = [[1, dt], [0, 1]] s + [dt²/2, dt] a + [σ dt/2, σ √dt] w`, with one
/// standard-normal `w` per step; safe set is the box `[-1, 1]²`.
#[derive(Clone, Debug)]
pub struct DoubleIntegrator {
    params: DoubleIntegratorParams,
    spec: EnvSpec,
}

impl DoubleIntegrator {
    pub fn new(params: DoubleIntegratorParams) -> Result<Self> {
        if !(params.sigma >= 0.0) || !(params.bound > 0.0) || !(params.max_accel > 0.0) {
            return Err(Error::validation("double integrator needs sigma >= 0, positive bound and max_accel"));
        }
        let spec = EnvSpec::new(2, vec![(-params.max_accel, params.max_accel)], Some(params.dt))?;
        Ok(Self { params, spec })
    }

    pub fn params(&self) -> &DoubleIntegratorParams {
        &self.params
    }
}

impl Environment for DoubleIntegrator {
    fn id(&self) -> &str {
        "dint"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn contains(&self, s: &[f64]) -> bool {
        let b = self.params.bound;
        s[0].abs() <= b && s[1].abs() <= b
    }

    fn transition(&self, s: &[f64], a: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let DoubleIntegratorParams { dt, sigma, .. } = self.params;
        // Drawn unconditionally so σ = 0 and σ > 0 consume the same stream.
        let w = rng.normal();
        let (p, v, a) = (s[0], s[1], a[0]);
        vec![
            p + dt * v + 0.5 * dt * dt * a + 0.5 * sigma * dt * w,
            v + dt * a + sigma * dt.sqrt() * w,
        ]
    }

    fn sampling_box(&self) -> Vec<(f64, f64)> {
        let b = self.params.bound;
        vec![(-b, b), (-b, b)]
    }
}

/// Distance travelled while braking from speed `speed ≥ 0` to rest in the
/// discrete-time model: full deceleration while that does not reverse the
/// velocity, then one partial step that lands exactly on zero.
///
/// With `δ = a_max·dt` and `speed = nδ + r`, `0 ≤ r < δ`, the trapezoidal
/// displacement sums to `(speed² − r²)/(2 a_max) + r·dt/2`.
pub fn dint_stopping_distance(speed: f64, params: &DoubleIntegratorParams) -> f64 {
    let delta = params.max_accel * params.dt;
    let n = (speed / delta).floor();
    let r = speed - n * delta;
    (speed * speed - r * r) / (2.0 * params.max_accel) + 0.5 * r * params.dt
}

/// Membership in the maximal control-invariant subset of the box for the
/// noise-free model: the state is in the box and braking at full effort
/// brings the velocity to zero before the position leaves it.
pub fn dint_invariant_set(p: f64, v: f64, params: &DoubleIntegratorParams) -> bool {
    let b = params.bound;
    if p.abs() > b || v.abs() > b {
        return false;
    }
    let d = dint_stopping_distance(v.abs(), params);
    if v >= 0.0 {
        p + d <= b
    } else {
        p - d >= -b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{env_step, ActionVector, StateVector};

    fn det() -> DoubleIntegrator {
        DoubleIntegrator::new(DoubleIntegratorParams { sigma: 0.0, ..Default::default() }).unwrap()
    }

    #[test]
    fn noise_free_substitution() {
        let env = det();
        let mut rng = SimRng::new(0);
        let s = env_step(&env, &StateVector::new(vec![0.0, 0.0]), &ActionVector::scalar(0.5), &mut rng).unwrap();
        assert!(!s.terminal);
        assert!((s.coords[0] - 0.000625).abs() < 1e-15);
        assert!((s.coords[1] - 0.025).abs() < 1e-15);
    }

    #[test]
    fn leaving_the_box_is_terminal() {
        let env = det();
        let mut rng = SimRng::new(0);
        let s = env_step(&env, &StateVector::new(vec![0.99, 1.0]), &ActionVector::scalar(0.0), &mut rng).unwrap();
        assert_eq!(s, StateVector::terminal(2));
    }

    #[test]
    fn rejects_out_of_bounds_actions() {
        let env = det();
        let mut rng = SimRng::new(0);
        let err = env_step(&env, &StateVector::new(vec![0.0, 0.0]), &ActionVector::scalar(0.6), &mut rng);
        assert!(matches!(err, Err(Error::Validation(_))));
        let err = env_step(&env, &StateVector::new(vec![0.0]), &ActionVector::scalar(0.0), &mut rng);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn safe_set_examples() {
        let env = det();
        assert!(env.contains(&[1.0, 1.0]));
        assert!(!env.contains(&[1.0001, 0.0]));
        assert!(env.contains(&[0.0, 0.0]));
    }

    #[test]
    fn invariant_set_examples() {
        let p = DoubleIntegratorParams::default();
        assert!(dint_invariant_set(0.0, 0.0, &p));
        assert!(!dint_invariant_set(1.0, 1.0, &p));
        assert!(dint_invariant_set(-1.0, 0.0, &p));
        // Braking from 1.0 needs exactly 1.0 of travel: 40 full steps.
        assert!((dint_stopping_distance(1.0, &p) - 1.0).abs() < 1e-12);
    }

    /// Step-by-step braking simulation, independent of the closed form.
    fn brakes_in_box(p0: f64, v0: f64, params: &DoubleIntegratorParams) -> bool {
        let b = params.bound;
        if p0.abs() > b || v0.abs() > b {
            return false;
        }
        let (mut p, mut v) = (p0, v0);
        let dt = params.dt;
        while v != 0.0 {
            let a = (-v / dt).clamp(-params.max_accel, params.max_accel);
            p += dt * v + 0.5 * dt * dt * a;
            v += dt * a;
            if v.abs() < 1e-15 {
                v = 0.0;
            }
            if p.abs() > b + 1e-12 {
                return false;
            }
        }
        true
    }

    #[test]
    fn closed_form_matches_simulated_braking_on_grid() {
        let params = DoubleIntegratorParams::default();
        let n = 201;
        let mut agree = 0;
        for i in 0..n {
            for j in 0..n {
                let p = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                let v = -1.0 + 2.0 * j as f64 / (n - 1) as f64;
                if dint_invariant_set(p, v, &params) == brakes_in_box(p, v, &params) {
                    agree += 1;
                }
            }
        }
        assert!(agree as f64 >= 0.99 * (n * n) as f64, "agreement {agree}/{}", n * n);
    }

    #[test]
    fn invariant_set_is_forward_closed() {
        let params = DoubleIntegratorParams { sigma: 0.0, ..Default::default() };
        // Absorbs rounding in the exact-equality braking case.
        let slack = DoubleIntegratorParams { bound: 1.0 + 1e-9, ..params.clone() };
        let env = det();
        let mut rng = SimRng::new(1);
        let n = 81;
        for i in 0..n {
            for j in 0..n {
                let p = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                let v = -1.0 + 2.0 * j as f64 / (n - 1) as f64;
                if !dint_invariant_set(p, v, &params) {
                    continue;
                }
                // Full braking, or the exact stopping action for slow states.
                let mut candidates = vec![-0.5, 0.0, 0.5];
                candidates.push((-v / params.dt).clamp(-0.5, 0.5));
                let ok = candidates.iter().any(|&a| {
                    let s = env.transition(&[p, v], &[a], &mut rng);
                    dint_invariant_set(s[0], s[1], &slack)
                });
                assert!(ok, "({p}, {v}) has no invariant successor");
            }
        }
    }

    #[test]
    fn stochastic_velocity_spread_and_noise_correlation() {
        let env = DoubleIntegrator::new(DoubleIntegratorParams::default()).unwrap();
        let mut rng = SimRng::new(5);
        let n = 100_000;
        let (mut sp, mut sv, mut spp, mut svv, mut spv) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let s = env.transition(&[0.0, 0.0], &[0.0], &mut rng);
            sp += s[0];
            sv += s[1];
            spp += s[0] * s[0];
            svv += s[1] * s[1];
            spv += s[0] * s[1];
        }
        let nf = n as f64;
        let (mp, mv) = (sp / nf, sv / nf);
        let var_v = svv / nf - mv * mv;
        let var_p = spp / nf - mp * mp;
        let cov = spv / nf - mp * mv;
        assert!((var_v.sqrt() / 0.05f64.sqrt() - 1.0).abs() < 0.02);
        // Shared draw: cov / var_v equals (dt/2)/√dt.
        let ratio = 0.025 / 0.05f64.sqrt();
        assert!((cov / var_v / ratio - 1.0).abs() < 0.02);
        assert!((cov / (var_p * var_v).sqrt() - 1.0).abs() < 1e-6);
    }
}
