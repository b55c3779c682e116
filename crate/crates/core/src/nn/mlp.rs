use std::fmt::Write as _;

use crate::dataset::fmt_f64;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Multilayer perceptron: ReLU on hidden layers, identity on the output.
///
/// All parameters live in one flat vector. Layer `l` stores its
/// `out × in` weight matrix row-major followed by its `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

/// Gradient of a scalar with respect to every parameter of an [`Mlp`],
/// laid out like [`Mlp::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradBuffer {
    pub data: Vec<f64>,
}

impl GradBuffer {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self { data: vec![0.0; net.n_params()] }
    }
}

/// Per-layer activations recorded by [`Mlp::forward_tape`].
#[derive(Clone, Debug, Default)]
pub struct Tape {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], Vec::as_slice)
    }
}

impl Mlp {
    /// Zero-initialised network.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::contract(format!("invalid layer dims {dims:?}")));
        }
        let mut offsets = Vec::with_capacity(dims.len() - 1);
        let mut n = 0;
        for w in dims.windows(2) {
            offsets.push(n);
            n += w[0] * w[1] + w[1];
        }
        Ok(Self { dims: dims.to_vec(), offsets, params: vec![0.0; n] })
    }

    /// Fan-in scaled initialisation: every weight and bias of a layer is
    /// uniform in `±1/√fan_in`, the usual default for fully connected
    /// layers in common deep-learning libraries.
    pub fn new(dims: &[usize], rng: &mut SimRng) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        for l in 0..net.n_layers() {
            let (fan_in, out) = (net.dims[l], net.dims[l + 1]);
            let bound = (1.0 / fan_in as f64).sqrt();
            let off = net.offsets[l];
            for w in &mut net.params[off..off + fan_in * out + out] {
                *w = rng.uniform_in(-bound, bound);
            }
        }
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weight_index(&self, layer: usize, out: usize, inp: usize) -> usize {
        self.offsets[layer] + out * self.dims[layer] + inp
    }

    pub fn bias_index(&self, layer: usize, out: usize) -> usize {
        self.offsets[layer] + self.dims[layer] * self.dims[layer + 1] + out
    }

    pub fn set_weight(&mut self, layer: usize, out: usize, inp: usize, value: f64) {
        let i = self.weight_index(layer, out, inp);
        self.params[i] = value;
    }

    pub fn set_bias(&mut self, layer: usize, out: usize, value: f64) {
        let i = self.bias_index(layer, out);
        self.params[i] = value;
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::default();
        self.forward_tape(input, &mut tape)?;
        Ok(tape.output().to_vec())
    }

    /// Forward pass that keeps the activations for a later backward pass.
    pub fn forward_tape<'t>(&self, input: &[f64], tape: &'t mut Tape) -> Result<&'t [f64]> {
        if input.len() != self.dims[0] {
            return Err(Error::contract(format!(
                "network input has {} entries, expected {}",
                input.len(),
                self.dims[0]
            )));
        }
        let layers = self.n_layers();
        tape.acts.resize_with(layers + 1, Vec::new);
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(input);
        for l in 0..layers {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[self.offsets[l]..self.offsets[l] + n_in * n_out];
            let b = &self.params[self.offsets[l] + n_in * n_out..self.offsets[l] + n_in * n_out + n_out];
            let (head, tail) = tape.acts.split_at_mut(l + 1);
            let x = &head[l];
            let y = &mut tail[0];
            y.clear();
            let hidden = l + 1 < layers;
            for j in 0..n_out {
                let row = &w[j * n_in..(j + 1) * n_in];
                let mut acc = b[j];
                for (wi, xi) in row.iter().zip(x) {
                    acc += wi * xi;
                }
                y.push(if hidden && acc <= 0.0 { 0.0 } else { acc });
            }
        }
        Ok(tape.output())
    }

    /// Reverse pass for the activations in `tape`.
    ///
    /// Adds `∂(output · upstream)/∂θ` into `grads` when given and, when
    /// requested, writes the gradient with respect to the input into
    /// `input_grad`.
    pub fn backward_tape(
        &self,
        tape: &mut Tape,
        upstream: &[f64],
        mut grads: Option<&mut [f64]>,
        input_grad: Option<&mut [f64]>,
    ) -> Result<()> {
        let layers = self.n_layers();
        if tape.acts.len() != layers + 1
            || upstream.len() != self.output_dim()
            || grads.as_ref().is_some_and(|g| g.len() != self.n_params())
        {
            return Err(Error::contract("backward pass shapes do not match the network"));
        }
        let Tape { acts, delta, delta_next } = tape;
        delta.clear();
        delta.extend_from_slice(upstream);
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let off = self.offsets[l];
            let x = &acts[l];
            if let Some(grads) = grads.as_deref_mut() {
                let (gw, gb) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for j in 0..n_out {
                    let d = delta[j];
                    if d == 0.0 {
                        continue;
                    }
                    gb[j] += d;
                    for (g, xi) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
            if l == 0 && input_grad.is_none() {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            delta_next.clear();
            delta_next.resize(n_in, 0.0);
            for j in 0..n_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                for (g, wi) in delta_next.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                    *g += d * wi;
                }
            }
            if l > 0 {
                // ReLU: pass-through where the activation is positive.
                for (g, a) in delta_next.iter_mut().zip(x) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            std::mem::swap(delta, delta_next);
        }
        if let Some(out) = input_grad {
            if out.len() != self.dims[0] {
                return Err(Error::contract("input gradient buffer has the wrong length"));
            }
            out.copy_from_slice(delta);
        }
        Ok(())
    }

    /// Parameter and input gradients of `output · upstream` at `input`.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(GradBuffer, Vec<f64>)> {
        let mut tape = Tape::default();
        self.forward_tape(input, &mut tape)?;
        let mut grads = GradBuffer::zeros_like(self);
        let mut input_grad = vec![0.0; self.dims[0]];
        self.backward_tape(&mut tape, upstream, Some(&mut grads.data), Some(&mut input_grad))?;
        Ok((grads, input_grad))
    }

    /// Text encoding: a header line `mlp relu d0 d1 ...`, then for each
    /// layer one line per weight row and one line of biases.
    pub fn to_text(&self) -> String {
        let mut s = String::from("mlp relu");
        for d in &self.dims {
            write!(s, " {d}").unwrap();
        }
        s.push('\n');
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let off = self.offsets[l];
            for j in 0..n_out {
                let row: Vec<String> = self.params[off + j * n_in..off + (j + 1) * n_in].iter().map(|&v| fmt_f64(v)).collect();
                s.push_str(&row.join(" "));
                s.push('\n');
            }
            let bias: Vec<String> = self.params[off + n_in * n_out..off + n_in * n_out + n_out].iter().map(|&v| fmt_f64(v)).collect();
            s.push_str(&bias.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse("empty network file"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("mlp") || fields.next() != Some("relu") {
            return Err(Error::parse(format!("bad network header `{header}`")));
        }
        let dims: Vec<usize> = fields
            .map(|f| f.parse().map_err(|_| Error::parse(format!("bad layer width `{f}`"))))
            .collect::<Result<_>>()?;
        let mut net = Self::zeros(&dims).map_err(|e| Error::parse(e.to_string()))?;
        let values: Vec<f64> = lines
            .flat_map(str::split_whitespace)
            .map(|f| f.parse().map_err(|_| Error::parse(format!("bad parameter `{f}`"))))
            .collect::<Result<_>>()?;
        if values.len() != net.n_params() {
            return Err(Error::parse(format!(
                "network file holds {} parameters, dims {dims:?} need {}",
                values.len(),
                net.n_params()
            )));
        }
        net.params = values;
        Ok(net)
    }
}
