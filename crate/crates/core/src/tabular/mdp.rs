//! Finite closed-loop systems restricted to the safe set.

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;

/// A linear map on `R^n`, applied with a fixed summation order.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

/// Compressed sparse rows with `u32` column indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRows {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseRows {
    pub fn new() -> Self {
        Self { offsets: vec![0], cols: Vec::new(), vals: Vec::new() }
    }

    /// Appends a row. Entries are stored in the order given.
    pub fn push_row<I: IntoIterator<Item = (usize, f64)>>(&mut self, entries: I) {
        for (c, v) in entries {
            self.cols.push(c as u32);
            self.vals.push(v);
        }
        self.offsets.push(self.cols.len());
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        self.cols[a..b].iter().zip(&self.vals[a..b]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        let mut acc = 0.0;
        for k in a..b {
            acc += self.vals[k] * x[self.cols[k] as usize];
        }
        acc
    }

    fn row_sum(&self, i: usize) -> f64 {
        self.vals[self.offsets[i]..self.offsets[i + 1]].iter().sum()
    }

    fn check_entries(&self, n_cols: usize, what: &str) -> Result<()> {
        for i in 0..self.n_rows() {
            for (c, v) in self.row(i) {
                if c >= n_cols {
                    return Err(Error::validation(format!("{what} row {i}: column {c} out of range")));
                }
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::validation(format!("{what} row {i}: invalid entry {v}")));
                }
            }
        }
        Ok(())
    }
}

/// Sub-stochastic matrix `M[x][y] = p(y|x)` over the safe states, plus the
/// one-step exit mass `1 - Σ_y M[x][y]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMdp {
    n: usize,
    rows: SparseRows,
    to_unsafe: Vec<f64>,
}

impl FiniteMdp {
    /// Builds from sparse rows; the exit mass is the row deficit.
    pub fn from_rows(n: usize, rows: SparseRows) -> Result<Self> {
        if rows.n_rows() != n {
            return Err(Error::validation(format!("expected {n} rows, got {}", rows.n_rows())));
        }
        rows.check_entries(n, "transition")?;
        let mut to_unsafe = Vec::with_capacity(n);
        for i in 0..n {
            let s = rows.row_sum(i);
            if s > 1.0 + ROW_SUM_TOL {
                return Err(Error::validation(format!("transition row {i} sums to {s} > 1")));
            }
            to_unsafe.push((1.0 - s).max(0.0));
        }
        Ok(Self { n, rows, to_unsafe })
    }

    /// Builds from a dense square matrix, dropping zero entries.
    pub fn from_dense(m: &[Vec<f64>]) -> Result<Self> {
        let n = m.len();
        let mut rows = SparseRows::new();
        for (i, r) in m.iter().enumerate() {
            if r.len() != n {
                return Err(Error::validation(format!("row {i} has {} entries, expected {n}", r.len())));
            }
            rows.push_row(r.iter().copied().enumerate().filter(|&(_, v)| v != 0.0));
        }
        Self::from_rows(n, rows)
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn to_unsafe(&self) -> &[f64] {
        &self.to_unsafe
    }

    pub fn rows(&self) -> &SparseRows {
        &self.rows
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in self.rows.row(i) {
                row[j] += v;
            }
        }
        m
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply(x, &mut out);
        out
    }
}

impl LinearOperator for FiniteMdp {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.rows.row_dot(i, x);
        }
    }
}

/// Transition kernel `P(y | x, u)` over safe states and a finite action set.
///
/// Row `x * n_actions + u` holds the safe-successor probabilities and
/// `terminal[x * n_actions + u]` the mass sent to `K`; each row sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    n_states: usize,
    n_actions: usize,
    rows: SparseRows,
    terminal: Vec<f64>,
}

impl Kernel {
    pub fn new(n_states: usize, n_actions: usize, rows: SparseRows, terminal: Vec<f64>) -> Result<Self> {
        let n_rows = n_states * n_actions;
        if n_actions == 0 || rows.n_rows() != n_rows || terminal.len() != n_rows {
            return Err(Error::validation(format!(
                "kernel needs {n_rows} rows and terminal entries, got {} and {}",
                rows.n_rows(),
                terminal.len()
            )));
        }
        rows.check_entries(n_states, "kernel")?;
        for r in 0..n_rows {
            let s = rows.row_sum(r) + terminal[r];
            if !(terminal[r] >= 0.0) || (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::validation(format!(
                    "kernel row (state {}, action {}) sums to {s}, not 1",
                    r / n_actions,
                    r % n_actions
                )));
            }
        }
        Ok(Self { n_states, n_actions, rows, terminal })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn rows(&self) -> &SparseRows {
        &self.rows
    }

    pub fn terminal(&self) -> &[f64] {
        &self.terminal
    }

    pub fn row(&self, state: usize, action: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows.row(state * self.n_actions + action)
    }

    pub fn terminal_mass(&self, state: usize, action: usize) -> f64 {
        self.terminal[state * self.n_actions + action]
    }

    /// `Σ_y P(y|x,u) v(y)` for every `(x, u)`.
    pub fn expect(&self, v: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.rows.row_dot(r, v);
        }
    }

    /// Restricts the kernel to a subset of its actions, in the given order.
    pub fn select_actions(&self, actions: &[usize]) -> Result<Self> {
        let mut rows = SparseRows::new();
        let mut terminal = Vec::with_capacity(self.n_states * actions.len());
        for x in 0..self.n_states {
            for &u in actions {
                if u >= self.n_actions {
                    return Err(Error::contract(format!("action {u} out of range")));
                }
                rows.push_row(self.row(x, u));
                terminal.push(self.terminal_mass(x, u));
            }
        }
        Self::new(self.n_states, actions.len(), rows, terminal)
    }
}

/// Per-state action distribution `π(u|x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::validation("policy table has the wrong size"));
        }
        for x in 0..n_states {
            let row = &probs[x * n_actions..(x + 1) * n_actions];
            let s: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::validation(format!("policy row {x} is not a distribution")));
            }
        }
        Ok(Self { n_states, n_actions, probs })
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (x, &u) in actions.iter().enumerate() {
            if u >= n_actions {
                return Err(Error::validation(format!("state {x}: action {u} out of range")));
            }
            probs[x * n_actions + u] = 1.0;
        }
        Ok(Self { n_states: actions.len(), n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, probs: vec![1.0 / n_actions as f64; n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.n_actions + action]
    }

    fn check_against(&self, kernel: &Kernel) -> Result<()> {
        if self.n_states != kernel.n_states || self.n_actions != kernel.n_actions {
            return Err(Error::contract("policy and kernel dimensions differ"));
        }
        Ok(())
    }
}

/// `M[x][y] = Σ_u π(u|x) P(y|x,u)` for safe `y`.
pub fn closed_loop_matrix(kernel: &Kernel, policy: &TabularPolicy) -> Result<FiniteMdp> {
    policy.check_against(kernel)?;
    let n = kernel.n_states;
    let mut acc = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut rows = SparseRows::new();
    for x in 0..n {
        for u in 0..kernel.n_actions {
            let p = policy.prob(x, u);
            if p == 0.0 {
                continue;
            }
            for (y, q) in kernel.row(x, u) {
                if acc[y] == 0.0 {
                    touched.push(y);
                }
                acc[y] += p * q;
            }
        }
        touched.sort_unstable();
        touched.dedup();
        rows.push_row(touched.iter().map(|&y| (y, acc[y])));
        for &y in &touched {
            acc[y] = 0.0;
        }
        touched.clear();
    }
    FiniteMdp::from_rows(n, rows)
}

/// The state-action operator `A_π β(x,u) = Σ_y P(y|x,u) Σ_u' π(u'|y) β(y,u')`.
pub struct StateActionOperator<'a> {
    kernel: &'a Kernel,
    policy: &'a TabularPolicy,
}

impl<'a> StateActionOperator<'a> {
    pub fn new(kernel: &'a Kernel, policy: &'a TabularPolicy) -> Result<Self> {
        policy.check_against(kernel)?;
        Ok(Self { kernel, policy })
    }
}

impl LinearOperator for StateActionOperator<'_> {
    fn dim(&self) -> usize {
        self.kernel.n_states * self.kernel.n_actions
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let m = self.kernel.n_actions;
        let averaged: Vec<f64> = (0..self.kernel.n_states)
            .map(|y| (0..m).map(|u| self.policy.prob(y, u) * x[y * m + u]).sum())
            .collect();
        self.kernel.expect(&averaged, out);
    }
}
