use std::fs;
use std::path::Path;

use crate::config::KeyValues;
use crate::dataset::fmt_f64;
use crate::error::{Error, Result};
use crate::nn::{Mlp, Tape};
use crate::rng::SimRng;

/// Learned eigenvalue estimate, state-action eigenfunction, backup policy
/// and optional state eigenfunction.
///
/// The policy network's raw outputs are squashed into the action box with
/// `a = mid + half · tanh(z)` per dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenModel {
    pub lambda: f64,
    pub psi_net: Mlp,
    pub policy_net: Mlp,
    pub phi_net: Option<Mlp>,
    pub action_bounds: Vec<(f64, f64)>,
}

impl EigenModel {
    /// Freshly initialised model. Networks draw from streams 0 (ψ), 1 (π)
    /// and 2 (φ) of `seed`.
    pub fn new(
        state_dim: usize,
        action_bounds: Vec<(f64, f64)>,
        psi_hidden: &[usize],
        policy_hidden: &[usize],
        with_phi: bool,
        lambda_init: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(lambda_init > 0.0) {
            return Err(Error::validation(format!("initial lambda must be positive, got {lambda_init}")));
        }
        let k = action_bounds.len();
        let dims = |input: usize, hidden: &[usize], out: usize| {
            let mut d = vec![input];
            d.extend_from_slice(hidden);
            d.push(out);
            d
        };
        let psi_net = Mlp::new(&dims(state_dim + k, psi_hidden, 1), &mut SimRng::stream(seed, 0))?;
        let policy_net = Mlp::new(&dims(state_dim, policy_hidden, k), &mut SimRng::stream(seed, 1))?;
        let phi_net = if with_phi {
            Some(Mlp::new(&dims(state_dim, psi_hidden, 1), &mut SimRng::stream(seed, 2))?)
        } else {
            None
        };
        let model = Self { lambda: lambda_init, psi_net, policy_net, phi_net, action_bounds };
        model.validate()?;
        Ok(model)
    }

    pub fn state_dim(&self) -> usize {
        self.policy_net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_bounds.len()
    }

    fn validate(&self) -> Result<()> {
        let (d, k) = (self.state_dim(), self.action_dim());
        if self.psi_net.input_dim() != d + k || self.psi_net.output_dim() != 1 {
            return Err(Error::validation("ψ network must map state ⊕ action to a scalar"));
        }
        if self.policy_net.output_dim() != k {
            return Err(Error::validation("policy network output must match the action dimension"));
        }
        if let Some(phi) = &self.phi_net {
            if phi.input_dim() != d || phi.output_dim() != 1 {
                return Err(Error::validation("φ network must map state to a scalar"));
            }
        }
        if !(self.lambda > 0.0) {
            return Err(Error::validation("lambda must be positive"));
        }
        Ok(())
    }

    pub(crate) fn squash(&self, raw: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(raw.iter().zip(&self.action_bounds).map(|(&z, &(lo, hi))| {
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            (mid + half * z.tanh()).clamp(lo, hi)
        }));
    }

    /// `da/dz` of the squashing map, given the raw output.
    pub(crate) fn squash_slope(&self, raw: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(raw.iter().zip(&self.action_bounds).map(|(&z, &(lo, hi))| {
            let t = z.tanh();
            0.5 * (hi - lo) * (1.0 - t * t)
        }));
    }

    /// Backup action `π(x)`.
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        let raw = self.policy_net.forward(state)?;
        let mut a = Vec::with_capacity(raw.len());
        self.squash(&raw, &mut a);
        Ok(a)
    }

    /// `ψ(x, u)`.
    pub fn psi(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let mut input = Vec::with_capacity(state.len() + action.len());
        input.extend_from_slice(state);
        input.extend_from_slice(action);
        Ok(self.psi_net.forward(&input)?[0])
    }

    /// `φ(x)`: the φ network when present, else `ψ(x, π(x))`.
    pub fn phi(&self, state: &[f64]) -> Result<f64> {
        match &self.phi_net {
            Some(net) => Ok(net.forward(state)?[0]),
            None => self.psi(state, &self.act(state)?),
        }
    }

    /// `ψ(x, π(x))` reusing caller-owned buffers.
    pub(crate) fn psi_of_policy(&self, state: &[f64], tape: &mut Tape, buf: &mut Vec<f64>) -> Result<f64> {
        let raw = self.policy_net.forward_tape(state, tape)?.to_vec();
        let mut a = Vec::with_capacity(raw.len());
        self.squash(&raw, &mut a);
        buf.clear();
        buf.extend_from_slice(state);
        buf.extend_from_slice(&a);
        Ok(self.psi_net.forward_tape(buf, tape)?[0])
    }

    /// Writes `psi.net`, `policy.net`, optional `phi.net`, `lambda.txt`
    /// and `model.txt` (action bounds) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, text) in self.artifacts() {
            fs::write(dir.join(name), text)?;
        }
        Ok(())
    }

    /// File name and contents of every model artifact.
    pub fn artifacts(&self) -> Vec<(&'static str, String)> {
        let mut meta = String::new();
        for (i, (lo, hi)) in self.action_bounds.iter().enumerate() {
            meta.push_str(&format!("action_lo{i} = {}\naction_hi{i} = {}\n", fmt_f64(*lo), fmt_f64(*hi)));
        }
        let mut out = vec![
            ("model.txt", meta),
            ("lambda.txt", format!("{}\n", fmt_f64(self.lambda))),
            ("psi.net", self.psi_net.to_text()),
            ("policy.net", self.policy_net.to_text()),
        ];
        if let Some(phi) = &self.phi_net {
            out.push(("phi.net", phi.to_text()));
        }
        out
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            fs::read_to_string(dir.join(name))
                .map_err(|e| Error::parse(format!("cannot read {}: {e}", dir.join(name).display())))
        };
        let mut kv = KeyValues::parse(&read("model.txt")?)?;
        let mut action_bounds = Vec::new();
        while kv.contains(&format!("action_lo{}", action_bounds.len())) {
            let i = action_bounds.len();
            let lo: f64 = kv.take(&format!("action_lo{i}"))?.unwrap();
            let hi: f64 = kv
                .take(&format!("action_hi{i}"))?
                .ok_or_else(|| Error::parse(format!("model.txt lacks action_hi{i}")))?;
            action_bounds.push((lo, hi));
        }
        kv.finish()?;
        let lambda: f64 = read("lambda.txt")?
            .trim()
            .parse()
            .map_err(|_| Error::parse("lambda.txt does not hold a number"))?;
        let phi_path = dir.join("phi.net");
        let phi_net = if phi_path.exists() { Some(Mlp::from_text(&read("phi.net")?)?) } else { None };
        let model = Self {
            lambda,
            psi_net: Mlp::from_text(&read("psi.net")?)?,
            policy_net: Mlp::from_text(&read("policy.net")?)?,
            phi_net,
            action_bounds,
        };
        model.validate().map_err(|e| Error::parse(e.to_string()))?;
        Ok(model)
    }
}
