use crate::error::{Error, Result};
use crate::ndmath::{FullGaussian, Matrix, RngState};

/// Variance-preserving noise schedule `β₁..β_N`.
///
/// Step `n` of the chain corresponds to Ornstein–Uhlenbeck time
/// `s_n = −½ ln ᾱ_n`, which is how schedules, scores and samplers agree on
/// a common clock.
#[derive(Clone, Debug, PartialEq)]
pub struct VpSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl Default for VpSchedule {
    /// Constant `β = 0.02` for 400 steps, so `ᾱ_N ≈ 3.1e-4`.
    fn default() -> Self {
        Self::constant(0.02, 400).expect("valid default schedule")
    }
}

impl VpSchedule {
    pub fn constant(beta: f64, steps: usize) -> Result<Self> {
        Self::from_betas(vec![beta; steps])
    }

    /// An empty list is allowed and gives the zero-step schedule.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if let Some((i, b)) = betas
            .iter()
            .enumerate()
            .find(|(_, &b)| !(b > 0.0 && b < 1.0))
        {
            return Err(Error::InvalidArgument(format!(
                "beta[{}] = {b} outside (0, 1)",
                i + 1
            )));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Self { betas, alpha_bars })
    }

    /// Number of noising steps `N`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `β_n` for `n` in `1..=N`.
    pub fn beta(&self, n: usize) -> f64 {
        self.betas[n - 1]
    }

    /// `ᾱ_n` for `n` in `0..=N` (`ᾱ_0 = 1`).
    pub fn alpha_bar(&self, n: usize) -> f64 {
        self.alpha_bars[n]
    }

    pub fn final_alpha_bar(&self) -> f64 {
        *self.alpha_bars.last().unwrap()
    }

    /// OU time of step `n`.
    pub fn ou_time(&self, n: usize) -> f64 {
        -0.5 * self.alpha_bars[n].ln()
    }

    /// OU time of the last step.
    pub fn horizon(&self) -> f64 {
        self.ou_time(self.len())
    }

    /// Step time mapped to `[0, 1]` for network inputs.
    pub fn net_time(&self, n: usize) -> f64 {
        let h = self.horizon();
        if h > 0.0 {
            self.ou_time(n) / h
        } else {
            0.0
        }
    }

    /// Whether `ᾱ_N` is small enough for `N(0, I)` to stand in for the
    /// terminal marginal.
    pub fn reaches_reference(&self, threshold: f64) -> bool {
        self.final_alpha_bar() < threshold
    }
}

/// Runs `X_n = √(1−β_n) X_{n−1} + √β_n Z` and returns `X_0..X_N`.
pub fn forward_chain(x0: &Matrix, schedule: &VpSchedule, rng: &mut RngState) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(schedule.len() + 1);
    out.push(x0.clone());
    for &beta in schedule.betas() {
        let (keep, noise) = ((1.0 - beta).sqrt(), beta.sqrt());
        let prev = out.last().unwrap();
        let next = Matrix::from_fn(prev.rows(), prev.cols(), |i, j| {
            keep * prev[(i, j)] + noise * rng.normal()
        });
        out.push(next);
    }
    out
}

/// Law at OU time `t` of `dX = −X dt + √2 dW` started from `x0`:
/// `N(e^{−t} m₀, e^{−2t} Σ₀ + (1 − e^{−2t}) I)`.
pub fn ou_marginal(x0: &FullGaussian, t: f64) -> Result<FullGaussian> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("OU time must be >= 0, got {t}")));
    }
    let decay = (-t).exp();
    let decay2 = decay * decay;
    let mean = x0.mean().iter().map(|m| decay * m).collect();
    let d = x0.dim();
    let cov = Matrix::from_fn(d, d, |i, j| {
        decay2 * x0.cov()[(i, j)] + if i == j { 1.0 - decay2 } else { 0.0 }
    });
    FullGaussian::new(mean, cov)
}
