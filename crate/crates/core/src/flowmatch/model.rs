use std::io::{BufRead, Write};

use super::field::VelocityField;
use super::ode::{Direction, Integrator, OdeConfig};
use crate::error::{Error, Result};
use crate::ndmath::{FullGaussian, Matrix, RngState};
use crate::net::{cosine_lr, AdamState, Mlp, NetInput, Workspace, TIME_FEATURES};

/// Magic first line of a flow model checkpoint.
pub const FLOW_CHECKPOINT_HEADER: &str = "SHIFTGEN-FLOW-1";

/// Interpolation path `I_t(x₀, x₁)` between paired endpoints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Interpolant {
    /// `I_t = (1 - t) x₀ + t x₁`, `∂_t I_t = x₁ - x₀`.
    #[default]
    Linear,
}

impl Interpolant {
    pub fn name(self) -> &'static str {
        match self {
            Interpolant::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Interpolant::Linear),
            other => Err(Error::InvalidArgument(format!("unknown interpolant {other:?}"))),
        }
    }

    pub fn point_into(self, x0: &[f64], x1: &[f64], t: f64, out: &mut [f64]) {
        match self {
            Interpolant::Linear => {
                for ((o, a), b) in out.iter_mut().zip(x0).zip(x1) {
                    *o = (1.0 - t) * a + t * b;
                }
            }
        }
    }

    pub fn velocity_into(self, x0: &[f64], x1: &[f64], _t: f64, out: &mut [f64]) {
        match self {
            Interpolant::Linear => {
                for ((o, a), b) in out.iter_mut().zip(x0).zip(x1) {
                    *o = b - a;
                }
            }
        }
    }

    pub fn point(self, x0: &[f64], x1: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; x0.len()];
        self.point_into(x0, x1, t, &mut out);
        out
    }

    pub fn velocity(self, x0: &[f64], x1: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; x0.len()];
        self.velocity_into(x0, x1, t, &mut out);
        out
    }
}

/// Learned velocity field `v̂(x, t; c)`: an MLP on
/// `concat(x, t, sin 2πt, cos 2πt, c)`.
///
/// Time runs from data (`t = 0`) to reference (`t = 1`): the forward flow
/// normalizes data, the reverse flow generates.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowModel {
    pub net: Mlp,
    pub interpolant: Interpolant,
    pub ode: OdeConfig,
    dim: usize,
    context_dim: usize,
}

impl FlowModel {
    pub fn new(dim: usize, context_dim: usize, hidden: &[usize], rng: &mut RngState) -> Result<Self> {
        let mut sizes = vec![dim + TIME_FEATURES + context_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(dim);
        Ok(Self {
            net: Mlp::new(&sizes, rng)?,
            interpolant: Interpolant::Linear,
            ode: OdeConfig::rk4(64, Direction::Reverse),
            dim,
            context_dim,
        })
    }

    /// Wraps an existing network, checking its input/output sizes.
    pub fn from_net(net: Mlp, dim: usize, context_dim: usize) -> Result<Self> {
        if net.input_dim() != dim + TIME_FEATURES + context_dim || net.output_dim() != dim {
            return Err(Error::shape(
                "FlowModel::from_net",
                format!("{} -> {dim}", dim + TIME_FEATURES + context_dim),
                format!("{} -> {}", net.input_dim(), net.output_dim()),
            ));
        }
        Ok(Self {
            net,
            interpolant: Interpolant::Linear,
            ode: OdeConfig::rk4(64, Direction::Reverse),
            dim,
            context_dim,
        })
    }

    fn assemble(&self, x: &[f64], t: f64, context: &[f64]) -> Vec<f64> {
        NetInput::timed(x, t).with_context(context).assemble()
    }

    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{FLOW_CHECKPOINT_HEADER}")?;
        writeln!(w, "dim {}", self.dim)?;
        writeln!(w, "context_dim {}", self.context_dim)?;
        writeln!(w, "interpolant {}", self.interpolant.name())?;
        writeln!(w, "integrator {}", self.ode.integrator.name())?;
        writeln!(w, "steps {}", self.ode.steps)?;
        self.net.write_checkpoint(w)
    }

    pub fn read_checkpoint<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("missing {key} line")))??;
            if key.is_empty() {
                return Ok(line);
            }
            line.trim()
                .strip_prefix(key)
                .map(|v| v.trim().to_owned())
                .ok_or_else(|| Error::Checkpoint(format!("expected {key}, found {line:?}")))
        };
        let header = next("")?;
        if header.trim() != FLOW_CHECKPOINT_HEADER {
            return Err(Error::Checkpoint(format!(
                "expected {FLOW_CHECKPOINT_HEADER:?}, found {header:?}"
            )));
        }
        let parse_usize = |v: String, key: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::Checkpoint(format!("bad {key} value {v:?}")))
        };
        let dim = parse_usize(next("dim")?, "dim")?;
        let context_dim = parse_usize(next("context_dim")?, "context_dim")?;
        let interpolant =
            Interpolant::parse(&next("interpolant")?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let integrator =
            Integrator::parse(&next("integrator")?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let steps = parse_usize(next("steps")?, "steps")?;
        let net = Mlp::read_checkpoint_lines(&mut lines)?;
        let mut model =
            Self::from_net(net, dim, context_dim).map_err(|e| Error::Checkpoint(e.to_string()))?;
        model.interpolant = interpolant;
        model.ode = OdeConfig::new(integrator, steps.max(1), Direction::Reverse);
        Ok(model)
    }
}

impl VelocityField for FlowModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn context_dim(&self) -> usize {
        self.context_dim
    }

    fn velocity_into(&self, x: &[f64], t: f64, context: &[f64], out: &mut [f64]) {
        let input = self.assemble(x, t, context);
        let mut ws = Workspace::default();
        out.copy_from_slice(self.net.forward_cached(&input, &mut ws));
    }

    /// Exact trace of the network Jacobian in the state block.
    fn divergence(&self, x: &[f64], t: f64, context: &[f64]) -> f64 {
        let input = self.assemble(x, t, context);
        let mut ws = Workspace::default();
        let mut scratch = vec![0.0; self.net.num_params()];
        let mut gi = vec![0.0; input.len()];
        self.net
            .jacobian_with(&input, self.dim, &mut ws, &mut scratch, &mut gi)
            .trace()
    }
}

fn check_batches(
    x0: &Matrix,
    x1: &Matrix,
    t: &[f64],
    contexts: Option<&Matrix>,
) -> Result<()> {
    if x0.shape() != x1.shape() {
        return Err(Error::shape(
            "fm_loss endpoints",
            format!("{:?}", x0.shape()),
            format!("{:?}", x1.shape()),
        ));
    }
    if t.len() != x0.rows() {
        return Err(Error::shape("fm_loss times", x0.rows(), t.len()));
    }
    if let Some(c) = contexts {
        if c.rows() != x0.rows() {
            return Err(Error::shape("fm_loss contexts", x0.rows(), c.rows()));
        }
    }
    if t.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidArgument("interpolation times must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Flow-matching loss: mean over the batch of
/// `‖v̂(I_t(x₀, x₁), t; c) − ∂_t I_t(x₀, x₁)‖²`.
pub fn fm_loss<F: VelocityField + ?Sized>(
    field: &F,
    interpolant: Interpolant,
    x0: &Matrix,
    x1: &Matrix,
    t: &[f64],
    contexts: Option<&Matrix>,
) -> Result<f64> {
    check_batches(x0, x1, t, contexts)?;
    if x0.rows() == 0 {
        return Ok(0.0);
    }
    let d = x0.cols();
    let mut point = vec![0.0; d];
    let mut target = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut total = 0.0;
    for (i, &ti) in t.iter().enumerate() {
        interpolant.point_into(x0.row(i), x1.row(i), ti, &mut point);
        interpolant.velocity_into(x0.row(i), x1.row(i), ti, &mut target);
        field.velocity_into(&point, ti, contexts.map_or(&[][..], |c| c.row(i)), &mut v);
        total += v.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / x0.rows() as f64)
}

/// Endpoint distribution paired with the data.
#[derive(Clone, Debug)]
pub enum Reference {
    /// Fresh draws from a Gaussian for every batch.
    Gaussian(FullGaussian),
    /// Rows drawn uniformly (with replacement) from a second sample set.
    Samples(Matrix),
}

impl Reference {
    pub fn dim(&self) -> usize {
        match self {
            Reference::Gaussian(g) => g.dim(),
            Reference::Samples(m) => m.cols(),
        }
    }

    fn draw_into(&self, rng: &mut RngState, out: &mut [f64]) {
        match self {
            Reference::Gaussian(g) => {
                let z = rng.normal_vec(g.dim());
                let l = g.cholesky_factor();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = g.mean()[i] + crate::ndmath::dot(&l.row(i)[..=i], &z[..=i]);
                }
            }
            Reference::Samples(m) => out.copy_from_slice(m.row(rng.index(m.rows()))),
        }
    }
}

/// Settings for stochastic flow-matching training.
#[derive(Clone, Debug, PartialEq)]
pub struct FmConfig {
    /// Passes over the data; each pass shuffles it into `rows / batch` batches.
    pub epochs: usize,
    pub batch: usize,
    /// Initial Adam step, decayed along a cosine to `lr_min`.
    pub lr: f64,
    pub lr_min: f64,
    pub hidden: Vec<usize>,
}

impl Default for FmConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch: 128,
            lr: 2e-3,
            lr_min: 1e-5,
            hidden: vec![64, 64],
        }
    }
}

impl FmConfig {
    pub fn steps_for(&self, rows: usize) -> usize {
        self.epochs * (rows / self.batch.max(1)).max(1)
    }
}

/// A trained model with its per-step batch losses.
#[derive(Clone, Debug)]
pub struct FmFit {
    pub model: FlowModel,
    pub losses: Vec<f64>,
}

/// Adam regression of a network onto `(point, time, context) → target`
/// pairs with per-sample loss weights.
pub(crate) struct Regressor {
    adam: AdamState,
    grads: Vec<f64>,
    ws: Workspace,
    input: Vec<f64>,
    upstream: Vec<f64>,
}

impl Regressor {
    pub(crate) fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            adam: AdamState::for_net(net, lr),
            grads: vec![0.0; net.num_params()],
            ws: Workspace::default(),
            input: Vec::new(),
            upstream: vec![0.0; net.output_dim()],
        }
    }

    pub(crate) fn begin(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Adds `weight · ‖net(point, t, context) − target‖²` to the batch
    /// objective and returns that term.
    pub(crate) fn accumulate(
        &mut self,
        net: &Mlp,
        point: &[f64],
        t: f64,
        context: &[f64],
        target: &[f64],
        weight: f64,
    ) -> f64 {
        NetInput::timed(point, t)
            .with_context(context)
            .assemble_into(&mut self.input);
        let out = net.forward_cached(&self.input, &mut self.ws);
        let mut sq = 0.0;
        for ((u, o), y) in self.upstream.iter_mut().zip(out).zip(target) {
            let r = o - y;
            sq += r * r;
            *u = 2.0 * weight * r;
        }
        net.backward_cached(&mut self.ws, &self.upstream, &mut self.grads, None);
        weight * sq
    }

    pub(crate) fn set_lr(&mut self, lr: f64) {
        self.adam.lr = lr;
    }

    pub(crate) fn apply(&mut self, net: &mut Mlp) {
        self.adam.update(net.params_mut(), &self.grads);
    }
}

/// Trains a velocity field by flow matching with data at `t = 0` and the
/// reference at `t = 1`, independent pairing inside each batch and
/// `t ~ U[0, 1]` per pair.
///
/// `contexts`, when given, holds one context row per data row and makes the
/// model conditional.
pub fn train_fm(
    data: &Matrix,
    contexts: Option<&Matrix>,
    reference: &Reference,
    cfg: &FmConfig,
    rng: &mut RngState,
) -> Result<FmFit> {
    let n = data.rows();
    let d = data.cols();
    if cfg.batch == 0 || n < cfg.batch {
        return Err(Error::InsufficientRows {
            context: "train_fm (rows >= batch)",
            needed: cfg.batch.max(1),
            actual: n,
        });
    }
    if reference.dim() != d {
        return Err(Error::shape("train_fm reference", d, reference.dim()));
    }
    if let Reference::Samples(m) = reference {
        if m.rows() == 0 {
            return Err(Error::InvalidArgument("empty reference sample".into()));
        }
    }
    let k = contexts.map_or(0, Matrix::cols);
    if let Some(c) = contexts {
        if c.rows() != n {
            return Err(Error::shape("train_fm contexts", n, c.rows()));
        }
    }
    let mut model = FlowModel::new(d, k, &cfg.hidden, rng)?;
    let mut reg = Regressor::new(&model.net, cfg.lr);
    let total = cfg.steps_for(n);
    let mut losses = Vec::with_capacity(total);
    let batches = n / cfg.batch;
    let mut x1 = vec![0.0; d];
    let mut point = vec![0.0; d];
    let mut target = vec![0.0; d];
    let interp = model.interpolant;
    for _epoch in 0..cfg.epochs {
        let order = rng.permutation(n);
        for b in 0..batches {
            reg.begin();
            let mut loss = 0.0;
            for &i in &order[b * cfg.batch..(b + 1) * cfg.batch] {
                let x0 = data.row(i);
                reference.draw_into(rng, &mut x1);
                let t = rng.uniform();
                interp.point_into(x0, &x1, t, &mut point);
                interp.velocity_into(x0, &x1, t, &mut target);
                let ctx = contexts.map_or(&[][..], |c| c.row(i));
                loss += reg.accumulate(&model.net, &point, t, ctx, &target, 1.0 / cfg.batch as f64);
            }
            losses.push(loss);
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step: losses.len() - 1,
                    trace: losses,
                });
            }
            reg.set_lr(cosine_lr(cfg.lr, cfg.lr_min, losses.len() - 1, total));
            reg.apply(&mut model.net);
        }
    }
    Ok(FmFit { model, losses })
}
