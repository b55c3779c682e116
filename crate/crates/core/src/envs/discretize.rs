//! Monte-Carlo grid discretisation of a continuous environment.
//!
//! The state box is split into cell-centred grids, cells whose centre lies
//! outside `C` are dropped, and each `(cell, action)` row of the kernel is
//! estimated from `n_mc` successors of the cell centre. A successor is
//! assigned to its nearest cell; successors that leave `C`, or whose
//! nearest cell was dropped, count as mass on `K`. Row `r` draws from
//! stream `r` of the seed, so rows can be rebuilt independently.

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::tabular::{Kernel, SparseRows};

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub periodic: bool,
}

impl Axis {
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    pub fn nearest(&self, x: f64) -> usize {
        let k = ((x - self.lo) / self.width()).floor() as i64;
        if self.periodic {
            k.rem_euclid(self.n as i64) as usize
        } else {
            k.clamp(0, self.n as i64 - 1) as usize
        }
    }
}

#[derive(Clone, Debug)]
pub struct DiscretizeOptions {
    /// Cells per state dimension.
    pub resolution: Vec<usize>,
    /// Evenly spaced actions per action dimension, endpoints included.
    pub action_resolution: usize,
    pub n_mc: usize,
    pub seed: u64,
    /// Refuse to build when the kernel could need more than this many bytes.
    pub memory_cap_bytes: usize,
}

impl DiscretizeOptions {
    pub fn new(resolution: Vec<usize>, action_resolution: usize, n_mc: usize, seed: u64) -> Self {
        Self { resolution, action_resolution, n_mc, seed, memory_cap_bytes: 2 << 30 }
    }
}

#[derive(Clone, Debug)]
pub struct Discretization {
    pub axes: Vec<Axis>,
    /// Cell centre of each kept state.
    pub centers: Vec<Vec<f64>>,
    /// Flat grid index to state index, `None` for dropped cells.
    pub grid_to_state: Vec<Option<u32>>,
    pub actions: Vec<Vec<f64>>,
    pub kernel: Kernel,
}

impl Discretization {
    fn flat_index(&self, coords: &[f64]) -> usize {
        flat_index(&self.axes, coords)
    }

    /// State index of the cell nearest to `coords`, if that cell is kept.
    pub fn state_of(&self, coords: &[f64]) -> Option<usize> {
        self.grid_to_state[self.flat_index(coords)].map(|s| s as usize)
    }
}

fn flat_index(axes: &[Axis], coords: &[f64]) -> usize {
    axes.iter().zip(coords).fold(0, |acc, (ax, &x)| acc * ax.n + ax.nearest(x))
}

fn unflatten(axes: &[Axis], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; axes.len()];
    for (k, ax) in axes.iter().enumerate().rev() {
        idx[k] = flat % ax.n;
        flat /= ax.n;
    }
    idx
}

fn action_grid(bounds: &[(f64, f64)], per_dim: usize) -> Vec<Vec<f64>> {
    let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
    for &(lo, hi) in bounds {
        let vals: Vec<f64> = (0..per_dim)
            .map(|i| if i + 1 == per_dim { hi } else { lo + (hi - lo) * i as f64 / (per_dim - 1) as f64 })
            .collect();
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                vals.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    grid
}

pub fn discretize(env: &dyn Environment, opts: &DiscretizeOptions) -> Result<Discretization> {
    let spec = env.spec();
    if opts.resolution.len() != spec.state_dim {
        return Err(Error::contract(format!(
            "resolution has {} entries, state dimension is {}",
            opts.resolution.len(),
            spec.state_dim
        )));
    }
    if opts.resolution.iter().any(|&n| n < 2) || opts.action_resolution < 2 || opts.n_mc == 0 {
        return Err(Error::validation("grid and action resolutions must be >= 2 and n_mc >= 1"));
    }
    let periodic = env.periodic_dims();
    let axes: Vec<Axis> = env
        .sampling_box()
        .into_iter()
        .zip(&opts.resolution)
        .zip(periodic)
        .map(|(((lo, hi), &n), periodic)| Axis { lo, hi, n, periodic })
        .collect();
    let n_grid: usize = axes.iter().map(|a| a.n).product();
    let actions = action_grid(&spec.action_bounds, opts.action_resolution);
    let n_actions = actions.len();

    let row_entries = opts.n_mc.min(n_grid);
    let estimate = n_grid
        .saturating_mul(n_actions)
        .saturating_mul(row_entries)
        .saturating_mul(std::mem::size_of::<u32>() + std::mem::size_of::<f64>());
    if estimate > opts.memory_cap_bytes {
        return Err(Error::validation(format!(
            "discretisation may need {estimate} bytes, above the cap of {} bytes",
            opts.memory_cap_bytes
        )));
    }

    let mut centers = Vec::new();
    let mut grid_to_state = vec![None; n_grid];
    for (flat, slot) in grid_to_state.iter_mut().enumerate() {
        let idx = unflatten(&axes, flat);
        let c: Vec<f64> = axes.iter().zip(&idx).map(|(ax, &i)| ax.center(i)).collect();
        if env.contains(&c) {
            *slot = Some(centers.len() as u32);
            centers.push(c);
        }
    }
    let n_states = centers.len();
    if n_states == 0 {
        return Err(Error::validation("no grid cell centre lies in the safe set"));
    }

    let mut rows = SparseRows::new();
    let mut terminal = Vec::with_capacity(n_states * n_actions);
    let mut hits: Vec<u32> = Vec::with_capacity(opts.n_mc);
    let inv = 1.0 / opts.n_mc as f64;
    for (s, center) in centers.iter().enumerate() {
        for (u, action) in actions.iter().enumerate() {
            let mut rng = SimRng::stream(opts.seed, (s * n_actions + u) as u64);
            hits.clear();
            let mut exits = 0usize;
            for _ in 0..opts.n_mc {
                let next = env.transition(center, action, &mut rng);
                if !env.contains(&next) {
                    exits += 1;
                    continue;
                }
                match grid_to_state[flat_index(&axes, &next)] {
                    Some(y) => hits.push(y),
                    None => exits += 1,
                }
            }
            hits.sort_unstable();
            let mut entries = Vec::new();
            let mut k = 0;
            while k < hits.len() {
                let y = hits[k];
                let start = k;
                while k < hits.len() && hits[k] == y {
                    k += 1;
                }
                entries.push((y as usize, (k - start) as f64 * inv));
            }
            rows.push_row(entries);
            terminal.push(exits as f64 * inv);
        }
    }
    let kernel = Kernel::new(n_states, n_actions, rows, terminal)?;
    Ok(Discretization { axes, centers, grid_to_state, actions, kernel })
}

/// Best deterministic grid policy and its eigenpair, found by greedy
/// improvement from the policy that plays action `init(centre)` in each
/// cell.
pub fn grid_oracle(
    env: &dyn Environment,
    opts: &DiscretizeOptions,
    init: &dyn Fn(&[f64]) -> usize,
    tol: f64,
    max_rounds: usize,
) -> Result<(Discretization, crate::tabular::ImprovementRun)> {
    let d = discretize(env, opts)?;
    let start: Vec<usize> = d.centers.iter().map(|c| init(c)).collect();
    if let Some(&bad) = start.iter().find(|&&a| a >= d.actions.len()) {
        return Err(Error::contract(format!("initial action {bad} out of range")));
    }
    let run = crate::tabular::improve_policy(&d.kernel, start, tol, 1_000_000, max_rounds)?;
    Ok((d, run))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{DoubleIntegrator, DoubleIntegratorParams, Dubins, DubinsParams};

    #[test]
    fn deterministic_rows_are_point_masses() {
        let env = DoubleIntegrator::new(DoubleIntegratorParams { sigma: 0.0, ..Default::default() }).unwrap();
        let d = discretize(&env, &DiscretizeOptions::new(vec![21, 21], 5, 3, 0)).unwrap();
        for r in 0..d.kernel.rows().n_rows() {
            let entries: Vec<_> = d.kernel.rows().row(r).collect();
            let t = d.kernel.terminal()[r];
            assert!(
                (entries.len() == 1 && entries[0].1 == 1.0 && t == 0.0) || (entries.is_empty() && t == 1.0),
                "row {r}: {entries:?} / {t}"
            );
        }
    }

    #[test]
    fn rows_are_stochastic_and_reproducible() {
        let env = DoubleIntegrator::new(DoubleIntegratorParams::default()).unwrap();
        let opts = DiscretizeOptions::new(vec![15, 15], 3, 50, 9);
        let a = discretize(&env, &opts).unwrap();
        let b = discretize(&env, &opts).unwrap();
        assert_eq!(a.kernel, b.kernel);
        assert_eq!(a.kernel.n_states(), 225);
        assert_eq!(a.actions, vec![vec![-0.5], vec![0.0], vec![0.5]]);
        assert!(a.kernel.terminal().iter().any(|&t| t > 0.0));
    }

    #[test]
    fn dubins_grid_drops_obstacle_cells_and_wraps() {
        let env = Dubins::new(DubinsParams::default()).unwrap();
        let d = discretize(&env, &DiscretizeOptions::new(vec![12, 12, 8], 3, 20, 1)).unwrap();
        assert!(d.kernel.n_states() < 12 * 12 * 8);
        assert!(d.centers.iter().all(|c| c[0] * c[0] + c[1] * c[1] >= 1.0));
        // A point just past +3 maps to the first column.
        assert_eq!(d.axes[0].nearest(3.01), 0);
    }

    #[test]
    fn refuses_oversized_grids() {
        let env = DoubleIntegrator::new(DoubleIntegratorParams::default()).unwrap();
        let mut opts = DiscretizeOptions::new(vec![101, 101], 11, 2000, 0);
        opts.memory_cap_bytes = 1 << 20;
        assert!(matches!(discretize(&env, &opts), Err(Error::Validation(_))));
        opts.resolution = vec![1, 5];
        assert!(discretize(&env, &opts).is_err());
    }
}
