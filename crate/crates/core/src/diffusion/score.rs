use std::io::{BufRead, Write};

use super::mixture::GaussianMixture;
use super::schedule::VpSchedule;
use crate::error::{Error, Result};
use crate::flowmatch::Regressor;
use crate::ndmath::{format_f64, Matrix, RngState};
use crate::net::{cosine_lr, Mlp, NetInput, Workspace, TIME_FEATURES};

pub const SCORE_CHECKPOINT_HEADER: &str = "SHIFTGEN-SCORE-1";

/// A score `∇ log ρ_s(x)` indexed by OU time `s ∈ [0, horizon]`.
pub trait TimeScore: Sync {
    fn dim(&self) -> usize;

    /// OU time at which the marginal is taken to be `N(0, I)`.
    fn horizon(&self) -> f64;

    fn score_into(&self, x: &[f64], s: f64, out: &mut [f64]);

    fn score(&self, x: &[f64], s: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.score_into(x, s, &mut out);
        out
    }
}

impl<S: TimeScore + ?Sized> TimeScore for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn horizon(&self) -> f64 {
        (**self).horizon()
    }
    fn score_into(&self, x: &[f64], s: f64, out: &mut [f64]) {
        (**self).score_into(x, s, out)
    }
}

/// Exact score of the OU marginals of a Gaussian-mixture target.
#[derive(Clone, Debug)]
pub struct AnalyticScore {
    target: GaussianMixture,
    horizon: f64,
}

impl AnalyticScore {
    pub fn new(target: GaussianMixture, schedule: &VpSchedule) -> Self {
        Self::with_horizon(target, schedule.horizon())
    }

    pub fn with_horizon(target: GaussianMixture, horizon: f64) -> Self {
        Self { target, horizon }
    }

    pub fn target(&self) -> &GaussianMixture {
        &self.target
    }
}

impl TimeScore for AnalyticScore {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn score_into(&self, x: &[f64], s: f64, out: &mut [f64]) {
        let score = self
            .target
            .ou_marginal(s.max(0.0))
            .and_then(|m| m.score(x))
            .unwrap_or_else(|_| vec![f64::NAN; x.len()]);
        out.copy_from_slice(&score);
    }
}

/// Learned score `ŝ(x, t)` with `t = s / horizon ∈ [0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreModel {
    pub net: Mlp,
    schedule: VpSchedule,
    dim: usize,
}

impl ScoreModel {
    pub fn new(dim: usize, hidden: &[usize], schedule: VpSchedule, rng: &mut RngState) -> Result<Self> {
        let mut sizes = vec![dim + TIME_FEATURES];
        sizes.extend_from_slice(hidden);
        sizes.push(dim);
        Ok(Self {
            net: Mlp::new(&sizes, rng)?,
            schedule,
            dim,
        })
    }

    pub fn from_net(net: Mlp, schedule: VpSchedule) -> Result<Self> {
        let dim = net.output_dim();
        if net.input_dim() != dim + TIME_FEATURES {
            return Err(Error::shape(
                "ScoreModel::from_net",
                dim + TIME_FEATURES,
                net.input_dim(),
            ));
        }
        Ok(Self { net, schedule, dim })
    }

    pub fn schedule(&self) -> &VpSchedule {
        &self.schedule
    }

    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{SCORE_CHECKPOINT_HEADER}")?;
        writeln!(w, "dim {}", self.dim)?;
        writeln!(w, "schedule {}", self.schedule.len())?;
        for b in self.schedule.betas() {
            writeln!(w, "{}", format_f64(*b))?;
        }
        self.net.write_checkpoint(w)
    }

    pub fn read_checkpoint<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            Ok(lines
                .next()
                .ok_or_else(|| Error::Checkpoint("truncated score checkpoint".into()))??
                .trim()
                .to_owned())
        };
        let header = next()?;
        if header != SCORE_CHECKPOINT_HEADER {
            return Err(Error::Checkpoint(format!(
                "expected {SCORE_CHECKPOINT_HEADER:?}, found {header:?}"
            )));
        }
        let field = |line: String, key: &str| -> Result<usize> {
            line.strip_prefix(key)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("expected `{key} <n>`, found {line:?}")))
        };
        let dim = field(next()?, "dim")?;
        let n = field(next()?, "schedule")?;
        let betas = (0..n)
            .map(|_| {
                let v = next()?;
                v.parse::<f64>()
                    .map_err(|_| Error::Checkpoint(format!("bad beta {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let schedule = VpSchedule::from_betas(betas).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let net = Mlp::read_checkpoint_lines(&mut lines)?;
        let model = Self::from_net(net, schedule).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if model.dim != dim {
            return Err(Error::Checkpoint(format!("dim {dim} does not match network")));
        }
        Ok(model)
    }
}

impl TimeScore for ScoreModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn horizon(&self) -> f64 {
        self.schedule.horizon()
    }

    fn score_into(&self, x: &[f64], s: f64, out: &mut [f64]) {
        let h = self.horizon();
        let t = if h > 0.0 { s / h } else { 0.0 };
        let input = NetInput::timed(x, t).assemble();
        let mut ws = Workspace::default();
        out.copy_from_slice(self.net.forward_cached(&input, &mut ws));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DsmConfig {
    /// Passes over the data.
    pub epochs: usize,
    pub batch: usize,
    /// Initial Adam step, decayed along a cosine to `lr_min`.
    pub lr: f64,
    pub lr_min: f64,
    pub hidden: Vec<usize>,
}

impl Default for DsmConfig {
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

#[derive(Clone, Debug)]
pub struct DsmFit {
    pub model: ScoreModel,
    pub losses: Vec<f64>,
}

/// Denoising score matching. Each sample draws a step `n`, noise `ε`,
/// forms `x_n = √ᾱ_n x₀ + √(1−ᾱ_n) ε` and regresses `ŝ(x_n, t_n)` onto
/// `−ε / √(1−ᾱ_n)` with weight `1 − ᾱ_n`.
pub fn train_dsm(
    data: &Matrix,
    schedule: &VpSchedule,
    cfg: &DsmConfig,
    rng: &mut RngState,
) -> Result<DsmFit> {
    let (n, d) = data.shape();
    if n == 0 {
        return Err(Error::InsufficientRows {
            context: "train_dsm",
            needed: 1,
            actual: 0,
        });
    }
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("train_dsm needs at least one noise step".into()));
    }
    let batch = cfg.batch.clamp(1, n);
    let mut model = ScoreModel::new(d, &cfg.hidden, schedule.clone(), rng)?;
    let mut reg = Regressor::new(&model.net, cfg.lr);
    let batches = n / batch;
    let total = cfg.epochs * batches;
    let mut losses = Vec::with_capacity(total);
    let mut eps = vec![0.0; d];
    let mut point = vec![0.0; d];
    let mut target = vec![0.0; d];
    for _ in 0..cfg.epochs {
        let order = rng.permutation(n);
        for b in 0..batches {
            reg.begin();
            let mut loss = 0.0;
            for &i in &order[b * batch..(b + 1) * batch] {
                let step = 1 + rng.index(schedule.len());
                let ab = schedule.alpha_bar(step);
                let sigma = (1.0 - ab).sqrt();
                rng.fill_normal(&mut eps);
                for k in 0..d {
                    point[k] = ab.sqrt() * data[(i, k)] + sigma * eps[k];
                    target[k] = -eps[k] / sigma;
                }
                let weight = (1.0 - ab) / batch as f64;
                loss += reg.accumulate(&model.net, &point, schedule.net_time(step), &[], &target, weight);
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
    Ok(DsmFit { model, losses })
}
