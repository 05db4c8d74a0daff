//! Worst-case distributions by Wasserstein-penalized minimax on particles.
//!
//! The adversary moves particles `x′ᵢ` away from their base positions `xᵢ`
//! to maximize `mean ℓ(θ, x′ᵢ) − ‖x′ᵢ − xᵢ‖² / (2λ)` while the decision
//! `θ` minimizes it, by gradient descent–ascent.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ndmath::{column_means, column_stds, Matrix};

/// A decision loss `ℓ(θ, x)` with both gradients.
pub trait DecisionLoss: Sync {
    /// Dimension of `x`.
    fn dim(&self) -> usize;
    /// Dimension of `θ`.
    fn param_dim(&self) -> usize;
    fn value(&self, theta: &[f64], x: &[f64]) -> f64;
    fn grad_x_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]);
    fn grad_theta_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]);
}

/// Largest relative discrepancy between analytic gradients and central
/// differences at one point, `|g − fd| / max(1, |g|, |fd|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub theta: f64,
    pub x: f64,
}

impl GradCheck {
    pub fn max(&self) -> f64 {
        self.theta.max(self.x)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

fn central_difference(f: impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    let mut p = at.to_vec();
    (0..at.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Self-test of a loss's gradients against central differences with step `h`.
pub fn check_loss_gradients<L: DecisionLoss + ?Sized>(
    loss: &L,
    theta: &[f64],
    x: &[f64],
    h: f64,
) -> GradCheck {
    let mut gx = vec![0.0; loss.dim()];
    let mut gt = vec![0.0; loss.param_dim()];
    loss.grad_x_into(theta, x, &mut gx);
    loss.grad_theta_into(theta, x, &mut gt);
    let fx = central_difference(|p| loss.value(theta, p), x, h);
    let ft = central_difference(|p| loss.value(p, x), theta, h);
    let worst = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(a, b)| rel_err(*a, *b)).fold(0.0, f64::max);
    GradCheck {
        theta: worst(&gt, &ft),
        x: worst(&gx, &fx),
    }
}

/// `ℓ(x) = aᵀx`, no decision parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLoss {
    pub a: Vec<f64>,
}

impl LinearLoss {
    pub fn new(a: Vec<f64>) -> Self {
        Self { a }
    }

    /// Unit vector along coordinate `i` in `d` dimensions.
    pub fn axis(d: usize, i: usize) -> Self {
        let mut a = vec![0.0; d];
        a[i] = 1.0;
        Self { a }
    }
}

impl DecisionLoss for LinearLoss {
    fn dim(&self) -> usize {
        self.a.len()
    }
    fn param_dim(&self) -> usize {
        0
    }
    fn value(&self, _theta: &[f64], x: &[f64]) -> f64 {
        self.a.iter().zip(x).map(|(a, x)| a * x).sum()
    }
    fn grad_x_into(&self, _theta: &[f64], _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.a);
    }
    fn grad_theta_into(&self, _theta: &[f64], _x: &[f64], _out: &mut [f64]) {}
}

/// Smooth downside loss `β⁻¹ log(1 + exp(β(q − wᵀx)))` of a long-only
/// portfolio `w = softmax(θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioShortfall {
    pub threshold: f64,
    pub beta: f64,
    assets: usize,
}

impl PortfolioShortfall {
    pub fn new(assets: usize, threshold: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !threshold.is_finite() || assets == 0 {
            return Err(Error::InvalidArgument(format!(
                "PortfolioShortfall needs assets > 0, beta > 0, finite q (got {assets}, {beta}, {threshold})"
            )));
        }
        Ok(Self {
            threshold,
            beta,
            assets,
        })
    }

    /// `β = 10`, `q = 0`.
    pub fn with_defaults(assets: usize) -> Self {
        Self::new(assets, 0.0, 10.0).expect("valid defaults")
    }

    /// Returns `(w, wᵀx, σ(β(q − wᵀx)))`.
    fn parts(&self, theta: &[f64], x: &[f64]) -> (Vec<f64>, f64, f64) {
        let w = softmax_weights(theta);
        let r: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
        let z = self.beta * (self.threshold - r);
        (w, r, sigmoid(z))
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl DecisionLoss for PortfolioShortfall {
    fn dim(&self) -> usize {
        self.assets
    }
    fn param_dim(&self) -> usize {
        self.assets
    }
    fn value(&self, theta: &[f64], x: &[f64]) -> f64 {
        let w = softmax_weights(theta);
        let r: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
        softplus(self.beta * (self.threshold - r)) / self.beta
    }
    fn grad_x_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let (w, _, s) = self.parts(theta, x);
        for (o, w) in out.iter_mut().zip(&w) {
            *o = -s * w;
        }
    }
    fn grad_theta_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        // ∂(wᵀx)/∂θⱼ = wⱼ (xⱼ − wᵀx)
        let (w, r, s) = self.parts(theta, x);
        for ((o, w), x) in out.iter_mut().zip(&w).zip(x) {
            *o = -s * w * (x - r);
        }
    }
}

/// Numerically stable softmax.
pub fn softmax_weights(theta: &[f64]) -> Vec<f64> {
    let m = theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = theta.iter().map(|t| (t - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn check_pair<L: DecisionLoss + ?Sized>(
    loss: &L,
    theta: &[f64],
    base: &Matrix,
    transported: &Matrix,
) -> Result<()> {
    if base.shape() != transported.shape() {
        return Err(Error::shape(
            "base vs transported",
            format!("{:?}", base.shape()),
            format!("{:?}", transported.shape()),
        ));
    }
    check_cloud(loss, theta, transported)
}

fn check_cloud<L: DecisionLoss + ?Sized>(loss: &L, theta: &[f64], x: &Matrix) -> Result<()> {
    if x.cols() != loss.dim() {
        return Err(Error::shape("particle dimension", loss.dim(), x.cols()));
    }
    if theta.len() != loss.param_dim() {
        return Err(Error::shape("theta", loss.param_dim(), theta.len()));
    }
    if x.rows() == 0 {
        return Err(Error::InsufficientRows {
            context: "particles",
            needed: 1,
            actual: 0,
        });
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
    }
    Ok(())
}

/// Mean loss at `x`, the nominal empirical risk.
pub fn empirical_risk<L: DecisionLoss + ?Sized>(loss: &L, theta: &[f64], x: &Matrix) -> Result<f64> {
    check_cloud(loss, theta, x)?;
    Ok(x.row_iter().map(|r| loss.value(theta, r)).sum::<f64>() / x.rows() as f64)
}

/// `mean ℓ(θ, x′ᵢ) − ‖x′ᵢ − xᵢ‖² / (2λ)`.
pub fn penalized_objective<L: DecisionLoss + ?Sized>(
    loss: &L,
    theta: &[f64],
    base: &Matrix,
    transported: &Matrix,
    lambda: f64,
) -> Result<f64> {
    check_lambda(lambda)?;
    check_pair(loss, theta, base, transported)?;
    let total: f64 = base
        .row_iter()
        .zip(transported.row_iter())
        .map(|(x, y)| {
            let pen: f64 = x.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum();
            loss.value(theta, y) - pen / (2.0 * lambda)
        })
        .sum();
    Ok(total / base.rows() as f64)
}

/// Per-particle `∇ₓℓ(θ, x′ᵢ) − (x′ᵢ − xᵢ)/λ`, the gradient in `L²(P)`.
pub fn grad_map<L: DecisionLoss + ?Sized>(
    loss: &L,
    theta: &[f64],
    base: &Matrix,
    transported: &Matrix,
    lambda: f64,
) -> Result<Matrix> {
    check_lambda(lambda)?;
    check_pair(loss, theta, base, transported)?;
    let d = base.cols();
    let data: Vec<f64> = (0..base.rows())
        .into_par_iter()
        .flat_map_iter(|i| {
            let (x, y) = (base.row(i), transported.row(i));
            let mut g = vec![0.0; d];
            loss.grad_x_into(theta, y, &mut g);
            for k in 0..d {
                g[k] -= (y[k] - x[k]) / lambda;
            }
            g
        })
        .collect();
    Matrix::new(base.rows(), d, data)
}

/// `mean ∇_θ ℓ(θ, x′ᵢ)`.
pub fn grad_theta<L: DecisionLoss + ?Sized>(loss: &L, theta: &[f64], transported: &Matrix) -> Result<Vec<f64>> {
    check_cloud(loss, theta, transported)?;
    let p = loss.param_dim();
    let mut acc = vec![0.0; p];
    let mut g = vec![0.0; p];
    for x in transported.row_iter() {
        loss.grad_theta_into(theta, x, &mut g);
        for (a, v) in acc.iter_mut().zip(&g) {
            *a += v;
        }
    }
    let n = transported.rows() as f64;
    Ok(acc.into_iter().map(|v| v / n).collect())
}

/// `(‖grad_theta‖₂, √(mean ‖grad_map row‖²))`.
pub fn stationarity_norm<L: DecisionLoss + ?Sized>(
    loss: &L,
    theta: &[f64],
    base: &Matrix,
    transported: &Matrix,
    lambda: f64,
) -> Result<(f64, f64)> {
    let gt = grad_theta(loss, theta, transported)?;
    let gm = grad_map(loss, theta, base, transported, lambda)?;
    let map_norm = (gm.as_slice().iter().map(|v| v * v).sum::<f64>() / gm.rows() as f64).sqrt();
    Ok((gt.iter().map(|v| v * v).sum::<f64>().sqrt(), map_norm))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GdaConfig {
    /// Perturbation scale λ of the transport penalty.
    pub lambda: f64,
    /// Decision step size τ.
    pub tau: f64,
    /// Particle ascent step size η.
    pub eta: f64,
    /// Outer iterations.
    pub iters: usize,
    /// Ascent sweeps after each decision step.
    pub inner_iters: usize,
}

impl Default for GdaConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            tau: 0.05,
            eta: 0.01,
            iters: 200,
            inner_iters: 5,
        }
    }
}

impl GdaConfig {
    /// `τ = η = 0` is allowed and freezes everything.
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if !(self.tau >= 0.0) || !(self.eta >= 0.0) || !self.tau.is_finite() || !self.eta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "step sizes must be finite and >= 0 (tau {}, eta {})",
                self.tau, self.eta
            )));
        }
        if self.inner_iters == 0 {
            return Err(Error::InvalidArgument("inner_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TransportResult {
    pub base: Matrix,
    pub transported: Matrix,
    pub theta: Vec<f64>,
    /// θ before the first and after every outer iteration.
    pub theta_trace: Vec<Vec<f64>>,
    /// Penalized objective, same indexing as `theta_trace`.
    pub objective_trace: Vec<f64>,
    /// `(θ norm, map norm)` from [`stationarity_norm`], same indexing.
    pub stationarity_trace: Vec<(f64, f64)>,
    /// Particle positions, same indexing; `snapshots[0]` is `base`.
    pub snapshots: Vec<Matrix>,
}

impl TransportResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap()
    }

    pub fn final_stationarity(&self) -> (f64, f64) {
        *self.stationarity_trace.last().unwrap()
    }
}

/// Gradient descent–ascent from `transported = base`: each outer iteration
/// takes one step `θ ← θ − τ grad_theta` and then `inner_iters` sweeps
/// `x′ ← x′ + η grad_map`.
pub fn gda_run<L: DecisionLoss + ?Sized>(
    loss: &L,
    theta0: &[f64],
    base: &Matrix,
    cfg: &GdaConfig,
) -> Result<TransportResult> {
    cfg.validate()?;
    check_cloud(loss, theta0, base)?;
    let mut theta = theta0.to_vec();
    let mut x = base.clone();
    let mut theta_trace = vec![theta.clone()];
    let mut objective_trace = vec![penalized_objective(loss, &theta, base, &x, cfg.lambda)?];
    let mut stationarity_trace = vec![stationarity_norm(loss, &theta, base, &x, cfg.lambda)?];
    let mut snapshots = vec![x.clone()];
    for step in 0..cfg.iters {
        let gt = grad_theta(loss, &theta, &x)?;
        for (t, g) in theta.iter_mut().zip(&gt) {
            *t -= cfg.tau * g;
        }
        for _ in 0..cfg.inner_iters {
            let gm = grad_map(loss, &theta, base, &x, cfg.lambda)?;
            x = x.add(&gm.scale(cfg.eta))?;
        }
        let obj = penalized_objective(loss, &theta, base, &x, cfg.lambda)?;
        objective_trace.push(obj);
        if !obj.is_finite() || !x.is_finite() || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Diverged {
                step,
                trace: objective_trace,
            });
        }
        stationarity_trace.push(stationarity_norm(loss, &theta, base, &x, cfg.lambda)?);
        theta_trace.push(theta.clone());
        snapshots.push(x.clone());
    }
    Ok(TransportResult {
        base: base.clone(),
        transported: x,
        theta,
        theta_trace,
        objective_trace,
        stationarity_trace,
        snapshots,
    })
}

/// Plain gradient descent on the empirical risk, the non-robust decision.
pub fn fit_nominal<L: DecisionLoss + ?Sized>(
    loss: &L,
    theta0: &[f64],
    data: &Matrix,
    tau: f64,
    iters: usize,
) -> Result<Vec<f64>> {
    check_cloud(loss, theta0, data)?;
    let mut theta = theta0.to_vec();
    for step in 0..iters {
        let g = grad_theta(loss, &theta, data)?;
        for (t, g) in theta.iter_mut().zip(&g) {
            *t -= tau * g;
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite {
                context: "fit_nominal",
                step,
            });
        }
    }
    Ok(theta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Backtest {
    /// Wealth after each period, starting from 1 before the first.
    pub wealth: Vec<f64>,
    /// Wealth hit zero or below; the path stops at that period.
    pub bankrupt: bool,
}

/// Cumulative wealth `Π (1 + wᵀr_t)` over the rows of `returns`.
pub fn backtest(weights: &[f64], returns: &Matrix) -> Result<Backtest> {
    if weights.len() != returns.cols() {
        return Err(Error::shape("backtest weights", returns.cols(), weights.len()));
    }
    let mut wealth = Vec::with_capacity(returns.rows());
    let mut w = 1.0;
    for r in returns.row_iter() {
        w *= 1.0 + weights.iter().zip(r).map(|(a, b)| a * b).sum::<f64>();
        wealth.push(w);
        if w <= 0.0 {
            return Ok(Backtest {
                wealth,
                bankrupt: true,
            });
        }
    }
    Ok(Backtest {
        wealth,
        bankrupt: false,
    })
}

/// Per-column affine standardization fitted on a training sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Uses the unbiased standard deviation; constant columns are an error.
    pub fn fit(train: &Matrix) -> Result<Self> {
        if train.rows() < 2 {
            return Err(Error::InsufficientRows {
                context: "Standardizer::fit",
                needed: 2,
                actual: train.rows(),
            });
        }
        let mean = column_means(train);
        let std = column_stds(train)?;
        if let Some(index) = std.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::ZeroVariance {
                context: "Standardizer::fit",
                index,
            });
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| (x[(i, j)] - self.mean[j]) / self.std[j]))
    }

    pub fn invert(&self, z: &Matrix) -> Result<Matrix> {
        self.check(z)?;
        Ok(Matrix::from_fn(z.rows(), z.cols(), |i, j| z[(i, j)] * self.std[j] + self.mean[j]))
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.mean.len() {
            return Err(Error::shape("Standardizer", self.mean.len(), x.cols()));
        }
        Ok(())
    }
}
