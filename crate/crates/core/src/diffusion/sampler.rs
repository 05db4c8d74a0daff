use rayon::prelude::*;

use super::schedule::VpSchedule;
use super::score::TimeScore;
use crate::error::{Error, Result};
use crate::flowmatch::{push, Direction, OdeConfig, VelocityField};
use crate::ndmath::{Matrix, RngState};

fn reference_draws(rng: &mut RngState, n: usize, d: usize) -> Matrix {
    Matrix::from_fn(n, d, |_, _| rng.normal())
}

/// Ancestral (Euler–Maruyama) sampling of the reverse chain on the schedule
/// grid, from `X_N ~ N(0, I)`:
/// `X_{n−1} = (X_n + β_n ŝ(X_n, s_n)) / √(1−β_n) + √β_n Z`, with no noise
/// on the final step.
pub fn reverse_sde_sample<S: TimeScore + ?Sized>(
    score: &S,
    schedule: &VpSchedule,
    n: usize,
    rng: &mut RngState,
) -> Result<Matrix> {
    let d = score.dim();
    let mut x = reference_draws(rng, n, d);
    for step in (1..=schedule.len()).rev() {
        let beta = schedule.beta(step);
        let s = schedule.ou_time(step);
        let scores: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| score.score(x.row(i), s))
            .collect();
        let keep = 1.0 / (1.0 - beta).sqrt();
        let noise = if step > 1 { beta.sqrt() } else { 0.0 };
        let next = Matrix::from_fn(n, d, |i, j| {
            let z = if noise > 0.0 { rng.normal() } else { 0.0 };
            keep * (x[(i, j)] + beta * scores[i * d + j]) + noise * z
        });
        if !next.is_finite() {
            return Err(Error::NonFinite {
                context: "reverse_sde_sample",
                step: schedule.len() - step,
            });
        }
        x = next;
    }
    Ok(x)
}

/// Probability-flow velocity `−x − ∇log ρ_s(x)` in OU time, rescaled to
/// flow time `t = s / horizon ∈ [0, 1]`.
pub struct PfOdeField<'a, S: ?Sized> {
    score: &'a S,
    horizon: f64,
}

impl<'a, S: TimeScore + ?Sized> PfOdeField<'a, S> {
    pub fn new(score: &'a S) -> Self {
        Self {
            horizon: score.horizon(),
            score,
        }
    }
}

impl<S: TimeScore + ?Sized> VelocityField for PfOdeField<'_, S> {
    fn dim(&self) -> usize {
        self.score.dim()
    }

    fn velocity_into(&self, x: &[f64], t: f64, _c: &[f64], out: &mut [f64]) {
        self.score.score_into(x, t * self.horizon, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.horizon * (-xi - *o);
        }
    }
}

/// OU-time drift `−x − ∇log ρ_s(x)` of the probability-flow ODE.
pub fn pf_ode_drift<S: TimeScore + ?Sized>(score: &S, x: &[f64], s: f64) -> Vec<f64> {
    score
        .score(x, s)
        .iter()
        .zip(x)
        .map(|(sc, xi)| -xi - sc)
        .collect()
}

/// Deterministically maps `cloud` (taken as horizon-time draws) back to time
/// zero with `steps` rk4 steps.
pub fn pf_ode_map<S: TimeScore + ?Sized>(score: &S, cloud: &Matrix, steps: usize) -> Result<Matrix> {
    if cloud.cols() != score.dim() {
        return Err(Error::shape("pf_ode_map", score.dim(), cloud.cols()));
    }
    let field = PfOdeField::new(score);
    push(&field, cloud, &OdeConfig::rk4(steps, Direction::Reverse), None)
}

/// Draws `n` reference points and runs [`pf_ode_map`] on them.
pub fn pf_ode_sample<S: TimeScore + ?Sized>(
    score: &S,
    n: usize,
    steps: usize,
    rng: &mut RngState,
) -> Result<Matrix> {
    let cloud = reference_draws(rng, n, score.dim());
    pf_ode_map(score, &cloud, steps)
}
