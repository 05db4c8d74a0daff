//! Wasserstein-2 geometry on empirical clouds and Gaussians.
//!
//! All empirical measures are uniform over their rows. Costs are squared
//! Euclidean distances and reported distances are `sqrt(mean cost)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flowmatch::{trajectories, Direction, OdeConfig, VelocityField};
use crate::ndmath::{
    sq_dist, sym_eigen, sym_inv_sqrt, sym_sqrt, AffineMap, FullGaussian, Matrix,
};

/// Largest cloud accepted by [`w2_assignment`].
pub const MAX_ASSIGNMENT_SIZE: usize = 512;

/// Exact W2 between two equal-size 1-d empirical measures (sorted matching).
pub fn w2_1d(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("w2_1d", x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("w2_1d needs at least one sample".into()));
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let sum: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sum / x.len() as f64).sqrt())
}

/// Matching of source rows to target rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `permutation[i]` is the target row matched to source row `i`.
    pub permutation: Vec<usize>,
    /// `sqrt(mean matched squared distance)`.
    pub cost: f64,
}

/// Pairwise squared-distance matrix, `n × m`.
pub fn cost_matrix(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.cols() != y.cols() {
        return Err(Error::shape("cost_matrix", x.cols(), y.cols()));
    }
    let rows: Vec<f64> = (0..x.rows())
        .into_par_iter()
        .flat_map_iter(|i| {
            let xi = x.row(i);
            (0..y.rows()).map(move |j| sq_dist(xi, y.row(j)))
        })
        .collect();
    Matrix::new(x.rows(), y.rows(), rows)
}

/// Minimum-cost perfect matching of a square cost matrix by the
/// shortest-augmenting-path Hungarian method with dual potentials, O(n³).
/// Ties go to the lowest column index.
pub fn solve_assignment(cost: &Matrix) -> Result<Vec<usize>> {
    if !cost.is_square() {
        return Err(Error::shape(
            "solve_assignment",
            "square cost matrix",
            format!("{}x{}", cost.rows(), cost.cols()),
        ));
    }
    let n = cost.rows();
    // 1-based arrays; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    Ok(perm)
}

/// Sum of `cost[i][perm[i]]` in row order.
pub fn assignment_total(cost: &Matrix, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum()
}

/// Exact W2 between equal-size clouds via optimal assignment.
pub fn w2_assignment(x: &Matrix, y: &Matrix) -> Result<(f64, Assignment)> {
    if x.rows() != y.rows() {
        return Err(Error::shape("w2_assignment rows", x.rows(), y.rows()));
    }
    if x.rows() == 0 {
        return Err(Error::InvalidArgument("w2_assignment needs nonempty clouds".into()));
    }
    if x.rows() > MAX_ASSIGNMENT_SIZE {
        return Err(Error::InvalidArgument(format!(
            "w2_assignment supports at most {MAX_ASSIGNMENT_SIZE} points, got {}",
            x.rows()
        )));
    }
    let cost = cost_matrix(x, y)?;
    let permutation = solve_assignment(&cost)?;
    let total = assignment_total(&cost, &permutation);
    let w = (total / x.rows() as f64).max(0.0).sqrt();
    Ok((
        w,
        Assignment {
            permutation,
            cost: w,
        },
    ))
}

/// Transport plan between two uniform empirical measures.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    pub plan: Matrix,
    pub row_marginals: Vec<f64>,
    pub col_marginals: Vec<f64>,
}

impl Coupling {
    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.row_iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.plan.cols()];
        for r in self.plan.row_iter() {
            for (a, b) in s.iter_mut().zip(r) {
                *a += b;
            }
        }
        s
    }

    /// `(Σ|row sum − a|, Σ|col sum − b|)`.
    pub fn marginal_violation(&self) -> (f64, f64) {
        let l1 = |s: Vec<f64>, m: &[f64]| s.iter().zip(m).map(|(a, b)| (a - b).abs()).sum();
        (
            l1(self.row_sums(), &self.row_marginals),
            l1(self.col_sums(), &self.col_marginals),
        )
    }
}

#[derive(Clone, Debug)]
pub struct SinkhornResult {
    /// `sqrt(⟨P, C⟩)` for the final plan `P`.
    pub cost: f64,
    pub coupling: Coupling,
    pub iterations: usize,
    pub converged: bool,
    /// `⟨P, C⟩` after each iteration.
    pub cost_trace: Vec<f64>,
    /// L1 row-marginal violation after each iteration (columns are exact
    /// after every column update).
    pub violation_trace: Vec<f64>,
}

fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Entropic optimal transport by alternating marginal scaling, in the log
/// domain so small `reg` does not underflow.
pub fn sinkhorn(
    x: &Matrix,
    y: &Matrix,
    reg: f64,
    max_iters: usize,
    tol: f64,
) -> Result<SinkhornResult> {
    if !(reg > 0.0) {
        return Err(Error::InvalidArgument(format!("sinkhorn reg must be > 0, got {reg}")));
    }
    if x.rows() == 0 || y.rows() == 0 {
        return Err(Error::InvalidArgument("sinkhorn needs nonempty clouds".into()));
    }
    let cost = cost_matrix(x, y)?;
    let (n, m) = (x.rows(), y.rows());
    let a = vec![1.0 / n as f64; n];
    let b = vec![1.0 / m as f64; m];
    let (log_a, log_b) = ((1.0 / n as f64).ln(), (1.0 / m as f64).ln());
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut cost_trace = Vec::new();
    let mut violation_trace = Vec::new();
    let mut plan = Matrix::zeros(n, m);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        for i in 0..n {
            let lse = log_sum_exp((0..m).map(|j| (g[j] - cost[(i, j)]) / reg));
            f[i] = reg * (log_a - lse);
        }
        for j in 0..m {
            let lse = log_sum_exp((0..n).map(|i| (f[i] - cost[(i, j)]) / reg));
            g[j] = reg * (log_b - lse);
        }
        let mut total = 0.0;
        let mut violation = 0.0;
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..m {
                let p = ((f[i] + g[j] - cost[(i, j)]) / reg).exp();
                plan[(i, j)] = p;
                row_sum += p;
                total += p * cost[(i, j)];
            }
            violation += (row_sum - a[i]).abs();
        }
        cost_trace.push(total);
        violation_trace.push(violation);
        if violation < tol {
            converged = true;
            break;
        }
    }
    let last = *cost_trace.last().unwrap_or(&0.0);
    Ok(SinkhornResult {
        cost: last.max(0.0).sqrt(),
        coupling: Coupling {
            plan,
            row_marginals: a,
            col_marginals: b,
        },
        iterations,
        converged,
        cost_trace,
        violation_trace,
    })
}

/// Closed-form W2 between Gaussians (Bures–Wasserstein).
pub fn w2_gaussian(a: &FullGaussian, b: &FullGaussian) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape("w2_gaussian", a.dim(), b.dim()));
    }
    let mean_sq = sq_dist(a.mean(), b.mean());
    let sb = sym_sqrt(b.cov())?;
    let inner = sb.matmul(a.cov())?.matmul(&sb)?.symmetrize();
    let cross = sym_sqrt(&inner)?.trace();
    let bures = (a.cov().trace() + b.cov().trace() - 2.0 * cross).max(0.0);
    Ok((mean_sq + bures).sqrt())
}

/// Brenier map between Gaussians: `x ↦ A (x − m_a) + m_b` with
/// `A = Σa^{-1/2} (Σa^{1/2} Σb Σa^{1/2})^{1/2} Σa^{-1/2}`.
pub fn ot_map_gaussian(a: &FullGaussian, b: &FullGaussian) -> Result<AffineMap> {
    if a.dim() != b.dim() {
        return Err(Error::shape("ot_map_gaussian", a.dim(), b.dim()));
    }
    let sa = sym_sqrt(a.cov())?;
    let sa_inv = sym_inv_sqrt(a.cov())?;
    let middle = sym_sqrt(&sa.matmul(b.cov())?.matmul(&sa)?.symmetrize())?;
    let lin = sa_inv.matmul(&middle)?.matmul(&sa_inv)?.symmetrize();
    let am = lin.matvec(a.mean())?;
    let offset = b.mean().iter().zip(&am).map(|(mb, x)| mb - x).collect();
    AffineMap::new(lin, offset)
}

/// Velocity of McCann's displacement interpolation between two Gaussians,
/// `T_t = (1 − t) Id + t T`. Its action equals `W2²(a, b)`.
#[derive(Clone, Debug)]
pub struct GaussianDisplacementField {
    eigenvalues: Vec<f64>,
    eigenvectors: Matrix,
    mean_a: Vec<f64>,
    mean_b: Vec<f64>,
}

impl GaussianDisplacementField {
    pub fn new(a: &FullGaussian, b: &FullGaussian) -> Result<Self> {
        let map = ot_map_gaussian(a, b)?;
        let (eigenvalues, eigenvectors) = sym_eigen(map.linear())?;
        Ok(Self {
            eigenvalues,
            eigenvectors,
            mean_a: a.mean().to_vec(),
            mean_b: b.mean().to_vec(),
        })
    }
}

impl VelocityField for GaussianDisplacementField {
    fn dim(&self) -> usize {
        self.mean_a.len()
    }

    fn velocity_into(&self, x: &[f64], t: f64, _c: &[f64], out: &mut [f64]) {
        // v(y, t) = (A − I)((1 − t) I + t A)⁻¹ (y − m_t) + (m_b − m_a)
        let d = self.dim();
        let centered: Vec<f64> = (0..d)
            .map(|i| x[i] - ((1.0 - t) * self.mean_a[i] + t * self.mean_b[i]))
            .collect();
        let v = &self.eigenvectors;
        let coeffs: Vec<f64> = (0..d)
            .map(|k| {
                let proj: f64 = (0..d).map(|i| v[(i, k)] * centered[i]).sum();
                let lam = self.eigenvalues[k];
                proj * (lam - 1.0) / ((1.0 - t) + t * lam)
            })
            .collect();
        for i in 0..d {
            out[i] = (0..d).map(|k| v[(i, k)] * coeffs[k]).sum::<f64>()
                + (self.mean_b[i] - self.mean_a[i]);
        }
    }
}

/// Monte Carlo estimate of the action `∫₀¹ E‖v(x_t, t)‖² dt` along RK4
/// trajectories started from `reference_samples` at `t = 0`, with
/// trapezoid quadrature over the `steps + 1` grid nodes.
pub fn dynamic_transport_cost<F: VelocityField + ?Sized>(
    field: &F,
    reference_samples: &Matrix,
    steps: usize,
) -> Result<f64> {
    if reference_samples.rows() == 0 {
        return Err(Error::InvalidArgument("need at least one reference sample".into()));
    }
    let cfg = OdeConfig::rk4(steps, Direction::Forward);
    let (times, clouds) = trajectories(field, reference_samples, &cfg)?;
    let mut v = vec![0.0; field.dim()];
    let energies: Vec<f64> = times
        .iter()
        .zip(&clouds)
        .map(|(&t, cloud)| {
            cloud
                .row_iter()
                .map(|x| {
                    field.velocity_into(x, t, &[], &mut v);
                    v.iter().map(|c| c * c).sum::<f64>()
                })
                .sum::<f64>()
                / cloud.rows() as f64
        })
        .collect();
    let h = 1.0 / steps as f64;
    let k = energies.len() - 1;
    Ok(h * (energies.iter().sum::<f64>() - 0.5 * (energies[0] + energies[k])))
}
