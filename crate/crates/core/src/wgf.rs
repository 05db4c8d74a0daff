//! JKO proximal steps for `KL(· ‖ N(0, I))` on axis-aligned Gaussians.
//!
//! On this family `W2²` splits into `Σ (m − m′)² + (s − s′)²`, so each step
//! is `d` independent scalar problems with closed-form minimizers.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ndmath::{
    cholesky, format_f64, gaussian_kl, solve_lower, AffineMap, FullGaussian, Matrix,
};

#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussianState {
    mean: Vec<f64>,
    stds: Vec<f64>,
}

impl DiagGaussianState {
    pub fn new(mean: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        if mean.len() != stds.len() {
            return Err(Error::shape("DiagGaussianState", mean.len(), stds.len()));
        }
        if let Some(i) = stds.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "std[{i}] = {} must be positive and finite",
                stds[i]
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("mean must be finite".into()));
        }
        Ok(Self { mean, stds })
    }

    pub fn standard(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            stds: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn to_gaussian(&self) -> FullGaussian {
        let vars: Vec<f64> = self.stds.iter().map(|s| s * s).collect();
        FullGaussian::diagonal(self.mean.clone(), &vars).expect("positive variances")
    }

    pub fn density_1d(&self, coord: usize, x: f64) -> f64 {
        let (m, s) = (self.mean[coord], self.stds[coord]);
        let z = (x - m) / s;
        (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    }
}

/// `KL = entropy + potential`, split as `entropy = ∫ρ log ρ + (d/2) ln 2π`
/// and `potential = ∫ρ ‖x‖²/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlParts {
    pub total: f64,
    pub entropy: f64,
    pub potential: f64,
}

/// `s² − 1 − 2 ln s` without cancellation near `s = 1`.
fn std_term(s: f64) -> f64 {
    let u = s - 1.0;
    let gap = if u.abs() < 1e-3 {
        // u − ln(1 + u)
        u * u * (0.5 - u * (1.0 / 3.0 - u * (0.25 - u / 5.0)))
    } else {
        u - u.ln_1p()
    };
    u * u + 2.0 * gap
}

pub fn kl_parts(s: &DiagGaussianState) -> KlParts {
    let d = s.dim() as f64;
    let total = 0.5
        * s.mean
            .iter()
            .zip(&s.stds)
            .map(|(m, sd)| m * m + std_term(*sd))
            .sum::<f64>();
    let entropy = -0.5 * d - s.stds.iter().map(|v| v.ln()).sum::<f64>();
    let potential = 0.5 * s.mean.iter().zip(&s.stds).map(|(m, v)| m * m + v * v).sum::<f64>();
    KlParts {
        total,
        entropy,
        potential,
    }
}

/// `KL(s ‖ N(0, I)) = ½ Σ (sᵢ² + mᵢ² − 1 − 2 ln sᵢ)`.
pub fn kl_to_standard(s: &DiagGaussianState) -> f64 {
    kl_parts(s).total
}

/// Exact minimizer of `KL(· ‖ N(0, I)) + W2²(·, s) / (2γ)` over diagonal
/// Gaussians: `m′ = m / (1 + γ)` and `s′` the positive root of
/// `(1 + γ) s′² − s s′ − γ = 0`.
pub fn jko_step(s: &DiagGaussianState, gamma: f64) -> Result<DiagGaussianState> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma must be > 0, got {gamma}")));
    }
    let mean = s.mean.iter().map(|m| m / (1.0 + gamma)).collect();
    let stds = s
        .stds
        .iter()
        .map(|&sd| (sd + (sd * sd + 4.0 * gamma * (1.0 + gamma)).sqrt()) / (2.0 * (1.0 + gamma)))
        .collect();
    Ok(DiagGaussianState { mean, stds })
}

#[derive(Clone, Debug)]
pub struct JkoRun {
    /// `ρ₀, ρ₁, …, ρ_N`.
    pub iterates: Vec<DiagGaussianState>,
    pub kls: Vec<f64>,
    /// Steps taken.
    pub iterations: usize,
    /// False when `max_iters` ran out before `KL ≤ ε²`.
    pub converged: bool,
}

/// Iterates [`jko_step`] until `KL ≤ ε²` or `max_iters` steps.
pub fn run_jko(s0: &DiagGaussianState, gamma: f64, eps: f64, max_iters: usize) -> Result<JkoRun> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be > 0, got {eps}")));
    }
    let goal = eps * eps;
    let mut iterates = vec![s0.clone()];
    let mut kls = vec![kl_to_standard(s0)];
    while kls.last().unwrap() > &goal && iterates.len() <= max_iters {
        let next = jko_step(iterates.last().unwrap(), gamma)?;
        kls.push(kl_to_standard(&next));
        iterates.push(next);
    }
    Ok(JkoRun {
        iterations: iterates.len() - 1,
        converged: *kls.last().unwrap() <= goal,
        iterates,
        kls,
    })
}

/// Affine map sending `target` to `N(0, I)`: `x ↦ L⁻¹ (x − m)`.
pub fn standardizing_map(target: &FullGaussian) -> Result<AffineMap> {
    let l = cholesky(target.cov())?;
    let d = target.dim();
    let mut inv = Matrix::zeros(d, d);
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        let col = solve_lower(&l, &e);
        for i in 0..d {
            inv[(i, j)] = col[i];
        }
    }
    let shift = inv.matvec(target.mean())?;
    AffineMap::new(inv, shift.iter().map(|v| -v).collect())
}

/// Returns `KL(p ‖ target)` and `KL(M⁻¹#p ‖ M⁻¹#target)`; they agree for
/// every invertible affine `M`.
pub fn kl_transfer_check(
    p: &DiagGaussianState,
    target: &DiagGaussianState,
    map: &AffineMap,
) -> Result<(f64, f64)> {
    if p.dim() != target.dim() || map.dim() != p.dim() {
        return Err(Error::shape("kl_transfer_check", p.dim(), map.dim()));
    }
    let inv = map.inverse()?;
    let (pg, tg) = (p.to_gaussian(), target.to_gaussian());
    let direct = gaussian_kl(&pg, &tg)?;
    let pulled = gaussian_kl(&pg.pushforward(&inv)?, &tg.pushforward(&inv)?)?;
    Ok((direct, pulled))
}

/// Trapezoid estimate of `TV(a, b)` along one coordinate, on `points`
/// nodes spanning both supports to ±12 std.
pub fn tv_1d_grid(a: &DiagGaussianState, b: &DiagGaussianState, coord: usize, points: usize) -> f64 {
    let lo = (a.mean[coord] - 12.0 * a.stds[coord]).min(b.mean[coord] - 12.0 * b.stds[coord]);
    let hi = (a.mean[coord] + 12.0 * a.stds[coord]).max(b.mean[coord] + 12.0 * b.stds[coord]);
    let n = points.max(2) - 1;
    let h = (hi - lo) / n as f64;
    let f = |i: usize| {
        let x = lo + i as f64 * h;
        (a.density_1d(coord, x) - b.density_1d(coord, x)).abs()
    };
    let inner: f64 = (1..n).map(f).sum();
    0.5 * h * (inner + 0.5 * (f(0) + f(n)))
}

/// `√(KL / 2)`.
pub fn pinsker_bound(kl: f64) -> f64 {
    (kl.max(0.0) / 2.0).sqrt()
}

/// CSV with columns `n, kl, entropy, potential, mean_i…, std_i…`.
pub fn write_jko_trace<W: Write>(mut w: W, iterates: &[DiagGaussianState]) -> Result<()> {
    let d = iterates.first().map_or(0, |s| s.dim());
    let mut header = vec!["n".to_owned(), "kl".into(), "entropy".into(), "potential".into()];
    header.extend((0..d).map(|i| format!("mean_{i}")));
    header.extend((0..d).map(|i| format!("std_{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (n, s) in iterates.iter().enumerate() {
        let parts = kl_parts(s);
        let mut row = vec![
            n.to_string(),
            format_f64(parts.total),
            format_f64(parts.entropy),
            format_f64(parts.potential),
        ];
        row.extend(s.mean.iter().chain(&s.stds).map(|v| format_f64(*v)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_jko_trace_file(path: impl AsRef<Path>, iterates: &[DiagGaussianState]) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_jko_trace(f, iterates)
}
