use std::f64::consts::PI;

use super::linalg::{cholesky, cholesky_log_det, cholesky_solve, inverse, spd_inverse, Lu};
use super::matrix::{dot, Matrix};
use super::rng::RngState;
use crate::error::{Error, Result};

/// Multivariate normal with a cached Cholesky factor of its covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct FullGaussian {
    mean: Vec<f64>,
    cov: Matrix,
    chol: Matrix,
}

impl FullGaussian {
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        if cov.rows() != mean.len() || !cov.is_square() {
            return Err(Error::shape(
                "FullGaussian::new",
                format!("{0}x{0} covariance", mean.len()),
                format!("{}x{}", cov.rows(), cov.cols()),
            ));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite mean".into()));
        }
        let chol = cholesky(&cov)?;
        Ok(Self { mean, cov, chol })
    }

    /// `N(0, I_d)`.
    pub fn standard(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            cov: Matrix::identity(d),
            chol: Matrix::identity(d),
        }
    }

    /// `N(mean, var · I)`.
    pub fn isotropic(mean: Vec<f64>, var: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, Matrix::identity(d).scale(var))
    }

    pub fn diagonal(mean: Vec<f64>, vars: &[f64]) -> Result<Self> {
        Self::new(mean, Matrix::from_diag(vars))
    }

    /// Moment fit (sample mean, unbiased covariance).
    pub fn fit(samples: &Matrix) -> Result<Self> {
        let (mean, cov) = mean_cov(samples)?;
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn cholesky_factor(&self) -> &Matrix {
        &self.chol
    }

    pub fn log_det_cov(&self) -> f64 {
        cholesky_log_det(&self.chol)
    }

    pub fn precision(&self) -> Matrix {
        spd_inverse(&self.cov).expect("covariance was validated at construction")
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let solved = super::linalg::solve_lower(&self.chol, &diff);
        let d = self.dim() as f64;
        -0.5 * (dot(&solved, &solved) + self.log_det_cov() + d * (2.0 * PI).ln())
    }

    /// `∇ log p(x) = -Σ⁻¹ (x - m)`.
    pub fn score(&self, x: &[f64]) -> Vec<f64> {
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| b - a).collect();
        cholesky_solve(&self.chol, &diff)
    }

    /// Distribution of `A x + b` for `x` drawn from `self`.
    pub fn pushforward(&self, map: &AffineMap) -> Result<FullGaussian> {
        let mean = map.apply(&self.mean)?;
        let cov = map
            .linear()
            .matmul(&self.cov)?
            .matmul(&map.linear().transpose())?
            .symmetrize();
        FullGaussian::new(mean, cov)
    }

    pub fn sample(&self, rng: &mut RngState, n: usize) -> Result<Matrix> {
        sample_gaussian(rng, self, n)
    }
}

/// `n` draws from `g`, one per row, as `m + L z` with `z` standard normal.
pub fn sample_gaussian(rng: &mut RngState, g: &FullGaussian, n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let d = g.dim();
    let mut out = Matrix::zeros(n, d);
    let mut z = vec![0.0; d];
    for i in 0..n {
        rng.fill_normal(&mut z);
        let row = out.row_mut(i);
        for (r, (lrow, m)) in row.iter_mut().zip(g.chol.row_iter().zip(&g.mean)) {
            *r = m + dot(lrow, &z);
        }
    }
    Ok(out)
}

/// Closed-form `KL(p ‖ q)` between Gaussians.
pub fn gaussian_kl(p: &FullGaussian, q: &FullGaussian) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::shape("gaussian_kl", p.dim(), q.dim()));
    }
    let d = p.dim();
    let diff: Vec<f64> = q.mean.iter().zip(&p.mean).map(|(a, b)| a - b).collect();
    let maha = {
        let s = super::linalg::solve_lower(&q.chol, &diff);
        dot(&s, &s)
    };
    // tr(Σq⁻¹ Σp) = ‖Lq⁻¹ Lp‖_F²
    let mut trace = 0.0;
    for j in 0..d {
        let col = p.chol.column(j);
        let s = super::linalg::solve_lower(&q.chol, &col);
        trace += dot(&s, &s);
    }
    Ok(0.5 * (trace + maha - d as f64 + q.log_det_cov() - p.log_det_cov()))
}

/// Sample mean and unbiased (divisor `n - 1`) covariance of the rows.
pub fn mean_cov(samples: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = samples.rows();
    if n < 2 {
        return Err(Error::InsufficientRows {
            context: "mean_cov",
            needed: 2,
            actual: n,
        });
    }
    let d = samples.cols();
    let mean = column_means(samples);
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in samples.row_iter() {
        for (c, (x, m)) in centered.iter_mut().zip(row.iter().zip(&mean)) {
            *c = x - m;
        }
        for i in 0..d {
            for j in 0..=i {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok((mean, cov))
}

pub fn column_means(samples: &Matrix) -> Vec<f64> {
    let mut mean = vec![0.0; samples.cols()];
    for row in samples.row_iter() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    let n = samples.rows().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Per-column unbiased standard deviations.
pub fn column_stds(samples: &Matrix) -> Result<Vec<f64>> {
    let (_, cov) = mean_cov(samples)?;
    Ok(cov.diag().iter().map(|v| v.sqrt()).collect())
}

/// Affine map `x ↦ A x + b` on `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    linear: Matrix,
    offset: Vec<f64>,
}

impl AffineMap {
    pub fn new(linear: Matrix, offset: Vec<f64>) -> Result<Self> {
        if !linear.is_square() || linear.rows() != offset.len() {
            return Err(Error::shape(
                "AffineMap::new",
                format!("{0}x{0} linear part", offset.len()),
                format!("{}x{}", linear.rows(), linear.cols()),
            ));
        }
        Ok(Self { linear, offset })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            linear: Matrix::identity(d),
            offset: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn linear(&self) -> &Matrix {
        &self.linear
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.linear.matvec(x)?;
        for (v, b) in y.iter_mut().zip(&self.offset) {
            *v += b;
        }
        Ok(y)
    }

    /// Applies the map to each row.
    pub fn apply_rows(&self, cloud: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(cloud.rows(), cloud.cols());
        for (i, row) in cloud.row_iter().enumerate() {
            let y = self.apply(row)?;
            out.row_mut(i).copy_from_slice(&y);
        }
        Ok(out)
    }

    /// `x ↦ A⁻¹ (x - b)`; fails for singular `A`.
    pub fn inverse(&self) -> Result<AffineMap> {
        let inv = inverse(&self.linear)?;
        let offset = inv.matvec(&self.offset)?.iter().map(|v| -v).collect();
        Ok(AffineMap {
            linear: inv,
            offset,
        })
    }

    pub fn log_abs_det(&self) -> Result<f64> {
        Ok(Lu::new(&self.linear)?.log_abs_det())
    }
}
