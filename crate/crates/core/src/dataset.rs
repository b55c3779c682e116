//! Offline transition data and its CSV encoding.

use std::io::{Read, Write};

use crate::env::{env_step, ActionVector, Environment, StateVector};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// One offline record `(x, u, x⁺)`; `x` is always safe, `x⁺` may be `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionTuple {
    pub state: StateVector,
    pub action: ActionVector,
    pub next_state: StateVector,
}

impl TransitionTuple {
    pub fn new(state: StateVector, action: ActionVector, next_state: StateVector) -> Result<Self> {
        if state.terminal {
            return Err(Error::contract("transition source state must be safe"));
        }
        if next_state.dim() != state.dim() {
            return Err(Error::contract("state and next state dimensions differ"));
        }
        Ok(Self { state, action, next_state })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub tuples: Vec<TransitionTuple>,
    pub env_id: String,
    pub seed: u64,
}

impl Dataset {
    pub fn state_dim(&self) -> usize {
        self.tuples.first().map_or(0, |t| t.state.dim())
    }

    pub fn action_dim(&self) -> usize {
        self.tuples.first().map_or(0, |t| t.action.coords.len())
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Non-empty and dimensionally uniform.
    pub fn validate(&self) -> Result<()> {
        if self.tuples.is_empty() {
            return Err(Error::validation("dataset is empty"));
        }
        let (d, k) = (self.state_dim(), self.action_dim());
        for (i, t) in self.tuples.iter().enumerate() {
            if t.state.terminal {
                return Err(Error::validation(format!("tuple {i}: source state is terminal")));
            }
            if t.state.dim() != d || t.next_state.dim() != d || t.action.coords.len() != k {
                return Err(Error::validation(format!("tuple {i}: inconsistent dimensions")));
            }
        }
        Ok(())
    }

    pub fn terminal_fraction(&self) -> f64 {
        let n = self.tuples.iter().filter(|t| t.next_state.terminal).count();
        n as f64 / self.tuples.len().max(1) as f64
    }

    /// Writes the dataset as CSV with header `s0..,a0..,terminal,ns0..`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let (d, k) = (self.state_dim(), self.action_dim());
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(csv_header(d, k))?;
        let mut rec: Vec<String> = Vec::with_capacity(2 * d + k + 1);
        for t in &self.tuples {
            rec.clear();
            rec.extend(t.state.coords.iter().map(|&x| fmt_f64(x)));
            rec.extend(t.action.coords.iter().map(|&x| fmt_f64(x)));
            rec.push(if t.next_state.terminal { "1" } else { "0" }.to_string());
            if t.next_state.terminal {
                rec.extend(std::iter::repeat_n(fmt_f64(0.0), d));
            } else {
                rec.extend(t.next_state.coords.iter().map(|&x| fmt_f64(x)));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the CSV layout written by [`Dataset::write_csv`].
    pub fn read_csv<R: Read>(reader: R, env_id: &str, seed: u64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let names: Vec<&str> = header.iter().collect();
        let term_col = names
            .iter()
            .position(|&h| h == "terminal")
            .ok_or_else(|| Error::parse("dataset header lacks a `terminal` column"))?;
        let d = names.iter().filter(|h| h.starts_with("ns")).count();
        let k = term_col.checked_sub(d).ok_or_else(|| Error::parse("malformed dataset header"))?;
        if names.len() != 2 * d + k + 1 || names != csv_header(d, k).iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::parse(format!("unexpected dataset header: {}", names.join(","))));
        }
        let mut tuples = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(format!("row {}: bad number `{s}`", line + 2)))
                })
                .collect::<Result<_>>()?;
            let terminal = match vals[d + k] {
                0.0 => false,
                1.0 => true,
                v => return Err(Error::parse(format!("row {}: terminal flag {v}", line + 2))),
            };
            let next = if terminal {
                StateVector::terminal(d)
            } else {
                StateVector::new(vals[d + k + 1..].to_vec())
            };
            tuples.push(TransitionTuple::new(
                StateVector::new(vals[..d].to_vec()),
                ActionVector::new(vals[d..d + k].to_vec()),
                next,
            )?);
        }
        Ok(Self { tuples, env_id: env_id.to_string(), seed })
    }
}

fn csv_header(d: usize, k: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..d).map(|i| format!("s{i}")).collect();
    h.extend((0..k).map(|i| format!("a{i}")));
    h.push("terminal".into());
    h.extend((0..d).map(|i| format!("ns{i}")));
    h
}

/// Formats a float with 17 significant digits, which round-trips exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `n` tuples with `(x, u)` uniform over `C × A` and `x⁺` from the dynamics.
pub fn collect_uniform(env: &dyn Environment, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::contract("collect_uniform needs n >= 1"));
    }
    let mut rng = SimRng::new(seed);
    let mut tuples = Vec::with_capacity(n);
    for _ in 0..n {
        let x = env.sample_safe_state(&mut rng);
        let u = env.sample_action(&mut rng);
        let next = env_step(env, &x, &u, &mut rng)?;
        tuples.push(TransitionTuple::new(x, u, next)?);
    }
    Ok(Dataset { tuples, env_id: env.id().to_string(), seed })
}
