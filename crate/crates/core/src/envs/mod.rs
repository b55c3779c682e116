//! Continuous benchmark systems and the grid discretisation used as an
//! exact oracle for them.

mod discretize;
mod double_integrator;
mod dubins;

pub use discretize::{discretize, grid_oracle, Axis, Discretization, DiscretizeOptions};
pub use double_integrator::{dint_invariant_set, dint_stopping_distance, DoubleIntegrator, DoubleIntegratorParams};
pub use dubins::{Dubins, DubinsParams};

use crate::config::KeyValues;
use crate::env::Environment;
use crate::error::{Error, Result};

/// Maps `value` into the half-open interval `[lo, hi)` by whole periods.
pub fn wrap(value: f64, lo: f64, hi: f64) -> f64 {
    let len = hi - lo;
    let w = lo + (value - lo).rem_euclid(len);
    // rem_euclid can round up to exactly `len` for tiny negative offsets.
    if w >= hi {
        lo
    } else {
        w
    }
}

/// Builds an environment from its id, consuming `sigma`, `dt` and
/// `noise_std` overrides from `kv`.
pub fn make_env(id: &str, kv: &mut KeyValues) -> Result<Box<dyn Environment>> {
    match id {
        "dint" => {
            let mut p = DoubleIntegratorParams::default();
            p.sigma = kv.take_or("sigma", p.sigma)?;
            p.dt = kv.take_or("dt", p.dt)?;
            Ok(Box::new(DoubleIntegrator::new(p)?))
        }
        "dubins" => {
            let mut p = DubinsParams::default();
            p.noise_std = kv.take_or("noise_std", p.noise_std)?;
            p.dt = kv.take_or("dt", p.dt)?;
            Ok(Box::new(Dubins::new(p)?))
        }
        other => Err(Error::validation(format!("unknown environment `{other}` (expected dint or dubins)"))),
    }
}
