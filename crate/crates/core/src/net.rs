//! Small fully connected networks with hand-written reverse mode.
//!
//! Hidden layers use `tanh`, the output layer is affine. Parameters live in
//! one flat buffer, layer by layer, each layer storing its `out × in`
//! weight matrix row-major followed by its `out` biases. Gradients use the
//! same layout, so optimizers and finite-difference checks work on plain
//! slices.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::ndmath::{format_f64, Matrix, RngState};

/// Magic first line of a network checkpoint.
pub const NET_CHECKPOINT_HEADER: &str = "SHIFTGEN-NET-1";

/// Number of features a time value contributes: `t, sin 2πt, cos 2πt`.
pub const TIME_FEATURES: usize = 3;

pub fn time_features(t: f64) -> [f64; TIME_FEATURES] {
    let w = 2.0 * PI * t;
    [t, w.sin(), w.cos()]
}

/// Arguments of a velocity or score network: state, optional time and a
/// (possibly empty) context vector.
#[derive(Clone, Copy, Debug)]
pub struct NetInput<'a> {
    pub x: &'a [f64],
    pub t: Option<f64>,
    pub context: &'a [f64],
}

impl<'a> NetInput<'a> {
    pub fn state(x: &'a [f64]) -> Self {
        Self {
            x,
            t: None,
            context: &[],
        }
    }

    pub fn timed(x: &'a [f64], t: f64) -> Self {
        Self {
            x,
            t: Some(t),
            context: &[],
        }
    }

    pub fn with_context(mut self, context: &'a [f64]) -> Self {
        self.context = context;
        self
    }

    pub fn dim(&self) -> usize {
        self.x.len() + self.t.map_or(0, |_| TIME_FEATURES) + self.context.len()
    }

    /// `concat(x, time features, context)`.
    pub fn assemble_into(&self, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(self.x);
        if let Some(t) = self.t {
            out.extend_from_slice(&time_features(t));
        }
        out.extend_from_slice(self.context);
    }

    pub fn assemble(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        self.assemble_into(&mut v);
        v
    }
}

/// Multilayer perceptron.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next_delta: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut RngState) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.uniform_range(-bound, bound));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(Error::shape("Mlp::from_params", expected, params.len()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite network parameter".into()));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    /// Network with every parameter zero.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::from_params(sizes, vec![0.0; param_count(sizes)])
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes must have at least two positive entries, got {sizes:?}"
            )));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offset(&self, layer: usize) -> usize {
        param_count(&self.sizes[..=layer])
    }

    /// Weight (row-major `out × in`) and bias slices of one layer.
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.layer_offset(layer);
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        (w, b)
    }

    /// Mutable weight and bias slices of one layer.
    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.layer_offset(layer);
        let (w, rest) = self.params[off..].split_at_mut(n_in * n_out);
        (w, &mut rest[..n_out])
    }

    /// Evaluates on an already assembled input vector, caching activations
    /// in `ws`. Panics if the input length is wrong; use [`Mlp::forward`]
    /// for a checked call.
    pub fn forward_cached<'w>(&self, input: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        assert_eq!(input.len(), self.input_dim(), "network input dimension");
        let layers = self.num_layers();
        ws.acts.resize_with(layers + 1, Vec::new);
        ws.acts[0].clear();
        ws.acts[0].extend_from_slice(input);
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let (prev, rest) = ws.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let out = &mut rest[0];
            out.clear();
            let last = l + 1 == layers;
            for (o, brow) in b.iter().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = brow + row.iter().zip(x.iter()).map(|(a, c)| a * c).sum::<f64>();
                out.push(if last { z } else { z.tanh() });
            }
        }
        &ws.acts[layers]
    }

    /// Reverse pass for the most recent [`Mlp::forward_cached`] call on `ws`.
    ///
    /// Adds `∂(upstreamᵀ f)/∂params` into `grad_params` and, when given,
    /// writes `∂(upstreamᵀ f)/∂input` into `grad_input`.
    pub fn backward_cached(
        &self,
        ws: &mut Workspace,
        upstream: &[f64],
        grad_params: &mut [f64],
        grad_input: Option<&mut [f64]>,
    ) {
        assert_eq!(upstream.len(), self.output_dim(), "upstream dimension");
        assert_eq!(grad_params.len(), self.num_params(), "gradient buffer size");
        let layers = self.num_layers();
        assert_eq!(ws.acts.len(), layers + 1, "forward pass missing");
        let mut delta = std::mem::take(&mut ws.delta);
        let mut next = std::mem::take(&mut ws.next_delta);
        delta.clear();
        delta.extend_from_slice(upstream);
        let mut off = self.params.len();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            off -= n_in * n_out + n_out;
            if l + 1 != layers {
                // through tanh: d tanh(z) = 1 - tanh(z)^2
                for (d, a) in delta.iter_mut().zip(&ws.acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let x = &ws.acts[l];
            let w = &self.params[off..off + n_in * n_out];
            let (gw, gb) = grad_params[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                gb[o] += d;
                if d != 0.0 {
                    for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
            if l > 0 || grad_input.is_some() {
                next.clear();
                next.resize(n_in, 0.0);
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        for (nx, wi) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                            *nx += d * wi;
                        }
                    }
                }
                std::mem::swap(&mut delta, &mut next);
            }
        }
        if let Some(gi) = grad_input {
            gi.copy_from_slice(&delta[..gi.len()]);
        }
        ws.delta = delta;
        ws.next_delta = next;
    }

    /// Evaluates on an already assembled input vector.
    pub fn eval(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::shape("Mlp::eval", self.input_dim(), input.len()));
        }
        let mut ws = Workspace::default();
        Ok(self.forward_cached(input, &mut ws).to_vec())
    }

    pub fn forward(&self, input: &NetInput<'_>) -> Result<Vec<f64>> {
        self.eval(&input.assemble())
    }

    /// Gradients of `upstreamᵀ f(input)` with respect to the parameters and
    /// to the assembled input.
    pub fn backward(&self, input: &NetInput<'_>, upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let assembled = input.assemble();
        if assembled.len() != self.input_dim() {
            return Err(Error::shape("Mlp::backward", self.input_dim(), assembled.len()));
        }
        if upstream.len() != self.output_dim() {
            return Err(Error::shape(
                "Mlp::backward upstream",
                self.output_dim(),
                upstream.len(),
            ));
        }
        let mut ws = Workspace::default();
        self.forward_cached(&assembled, &mut ws);
        let mut gp = vec![0.0; self.num_params()];
        let mut gi = vec![0.0; assembled.len()];
        self.backward_cached(&mut ws, upstream, &mut gp, Some(&mut gi));
        Ok((gp, gi))
    }

    /// Jacobian of the output with respect to the state block `x` of the
    /// input (`d_out × d_x`), one reverse pass per output coordinate.
    pub fn jacobian(&self, input: &NetInput<'_>) -> Result<Matrix> {
        let assembled = input.assemble();
        if assembled.len() != self.input_dim() {
            return Err(Error::shape("Mlp::jacobian", self.input_dim(), assembled.len()));
        }
        let mut ws = Workspace::default();
        let mut scratch = vec![0.0; self.num_params()];
        let mut gi = vec![0.0; assembled.len()];
        Ok(self.jacobian_with(&assembled, input.x.len(), &mut ws, &mut scratch, &mut gi))
    }

    pub(crate) fn jacobian_with(
        &self,
        assembled: &[f64],
        dx: usize,
        ws: &mut Workspace,
        scratch: &mut [f64],
        gi: &mut [f64],
    ) -> Matrix {
        let d_out = self.output_dim();
        let mut jac = Matrix::zeros(d_out, dx);
        let mut e = vec![0.0; d_out];
        self.forward_cached(assembled, ws);
        for i in 0..d_out {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[i] = 1.0;
            self.backward_cached(ws, &e, scratch, Some(gi));
            jac.row_mut(i).copy_from_slice(&gi[..dx]);
        }
        jac
    }

    /// Writes the textual checkpoint: header line, `layers` line, then one
    /// parameter per line in layer order.
    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{NET_CHECKPOINT_HEADER}")?;
        let sizes: Vec<String> = self.sizes.iter().map(usize::to_string).collect();
        writeln!(w, "layers {}", sizes.join(" "))?;
        for p in &self.params {
            writeln!(w, "{}", format_f64(*p))?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut lines = r.lines();
        Self::read_checkpoint_lines(&mut lines)
    }

    pub(crate) fn read_checkpoint_lines<I>(lines: &mut I) -> Result<Self>
    where
        I: Iterator<Item = std::io::Result<String>>,
    {
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Checkpoint("unexpected end of network block".into()))?
                .map_err(Error::from)
        };
        let header = next()?;
        if header.trim() != NET_CHECKPOINT_HEADER {
            return Err(Error::Checkpoint(format!(
                "expected {NET_CHECKPOINT_HEADER:?}, found {header:?}"
            )));
        }
        let layers = next()?;
        let sizes = layers
            .trim()
            .strip_prefix("layers")
            .ok_or_else(|| Error::Checkpoint(format!("bad layers line {layers:?}")))?
            .split_whitespace()
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::Checkpoint(format!("bad layer size {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::check_sizes(&sizes).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let n = param_count(&sizes);
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            let line = next()?;
            params.push(
                line.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Checkpoint(format!("bad parameter {line:?}")))?,
            );
        }
        Self::from_params(&sizes, params).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

/// Bias-corrected adaptive-moment optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn for_net(net: &Mlp, lr: f64) -> Self {
        Self::new(net.num_params(), lr)
    }

    /// One update of `params` against `grads`.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count");
        assert_eq!(grads.len(), self.m.len(), "gradient count");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Cosine decay from `lr` at step 0 to `lr_min` at step `total`.
pub fn cosine_lr(lr: f64, lr_min: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return lr;
    }
    let frac = (step.min(total - 1)) as f64 / (total - 1) as f64;
    lr_min + 0.5 * (lr - lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
}

pub fn adam_step(net: &mut Mlp, grads: &[f64], state: &mut AdamState) -> Result<()> {
    if grads.len() != net.num_params() {
        return Err(Error::shape("adam_step", net.num_params(), grads.len()));
    }
    state.update(net.params_mut(), grads);
    Ok(())
}
