use std::f64::consts::PI;

use super::wrap;
use crate::env::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq)]
pub struct DubinsParams {
    pub dt: f64,
    /// Standard deviation of each of the three noise components.
    pub noise_std: f64,
    pub max_turn: f64,
    pub half_width: f64,
    pub obstacle_radius: f64,
}

impl Default for DubinsParams {
    fn default() -> Self {
        Self { dt: 0.05, noise_std: 0.5, max_turn: 1.0, half_width: 3.0, obstacle_radius: 1.0 }
    }
}

/// Constant-speed Dubins car on the torus `[-3, 3)² × [-π, π)` with a disc
/// obstacle of radius 1 at the origin.
///
/// Positions are wrapped before the obstacle test.
#[derive(Clone, Debug)]
pub struct Dubins {
    params: DubinsParams,
    spec: EnvSpec,
}

impl Dubins {
    pub fn new(params: DubinsParams) -> Result<Self> {
        if !(params.noise_std >= 0.0) || !(params.half_width > params.obstacle_radius) {
            return Err(Error::validation("dubins needs noise_std >= 0 and an obstacle inside the domain"));
        }
        let spec = EnvSpec::new(3, vec![(-params.max_turn, params.max_turn)], Some(params.dt))?;
        Ok(Self { params, spec })
    }

    pub fn params(&self) -> &DubinsParams {
        &self.params
    }

    pub fn position_interval(&self) -> (f64, f64) {
        (-self.params.half_width, self.params.half_width)
    }
}

impl Environment for Dubins {
    fn id(&self) -> &str {
        "dubins"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn contains(&self, s: &[f64]) -> bool {
        s[0] * s[0] + s[1] * s[1] >= self.params.obstacle_radius * self.params.obstacle_radius
    }

    fn transition(&self, s: &[f64], a: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let DubinsParams { dt, noise_std, half_width: w, .. } = self.params;
        let sq = dt.sqrt();
        let z1 = noise_std * rng.normal();
        let z2 = noise_std * rng.normal();
        let z3 = noise_std * rng.normal();
        let (x, y, th) = (s[0], s[1], s[2]);
        vec![
            wrap(x + th.cos() * dt + z1 * sq, -w, w),
            wrap(y + th.sin() * dt + z2 * sq, -w, w),
            wrap(th + a[0] * dt + z3 * sq, -PI, PI),
        ]
    }

    fn sampling_box(&self) -> Vec<(f64, f64)> {
        let w = self.params.half_width;
        vec![(-w, w), (-w, w), (-PI, PI)]
    }

    fn periodic_dims(&self) -> Vec<bool> {
        vec![true; 3]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{env_step, ActionVector, StateVector};

    fn noiseless() -> Dubins {
        Dubins::new(DubinsParams { noise_std: 0.0, ..Default::default() }).unwrap()
    }

    fn step(env: &Dubins, s: [f64; 3]) -> StateVector {
        let mut rng = SimRng::new(0);
        env_step(env, &StateVector::new(s.to_vec()), &ActionVector::scalar(0.0), &mut rng).unwrap()
    }

    #[test]
    fn noiseless_substitution() {
        let s = step(&noiseless(), [0.0, 2.5, 0.0]);
        assert!(!s.terminal);
        assert!((s.coords[0] - 0.05).abs() < 1e-15);
        assert_eq!(s.coords[1], 2.5);
        assert_eq!(s.coords[2], 0.0);
    }

    #[test]
    fn entering_the_obstacle_is_terminal() {
        assert!(step(&noiseless(), [-1.04, 0.0, 0.0]).terminal);
    }

    #[test]
    fn position_wraps_before_the_obstacle_check() {
        let s = step(&noiseless(), [2.99, 0.0, 0.0]);
        assert!(!s.terminal);
        assert!((s.coords[0] + 2.96).abs() < 1e-12);
    }

    #[test]
    fn safe_set_examples() {
        let env = noiseless();
        for th in [-3.0, 0.0, 2.0] {
            assert!(env.contains(&[1.0, 0.0, th]));
            assert!(!env.contains(&[0.5, 0.5, th]));
        }
    }

    #[test]
    fn noisy_steps_stay_on_the_torus() {
        let env = Dubins::new(DubinsParams::default()).unwrap();
        let mut rng = SimRng::new(3);
        let mut s = StateVector::new(vec![2.9, -2.9, 3.1]);
        for _ in 0..5000 {
            let a = ActionVector::scalar(rng.uniform_in(-1.0, 1.0));
            let next = env_step(&env, &s, &a, &mut rng).unwrap();
            if next.terminal {
                s = env.sample_safe_state(&mut rng);
                continue;
            }
            let c = &next.coords;
            assert!((-3.0..3.0).contains(&c[0]) && (-3.0..3.0).contains(&c[1]));
            assert!((-PI..PI).contains(&c[2]));
            s = next;
        }
    }
}
