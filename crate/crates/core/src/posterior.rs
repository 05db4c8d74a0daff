//! Posterior sampling with a generative prior: unadjusted Langevin dynamics
//! on the latent variable `z ~ N(0, I)` of an invertible generator
//! `x = T₀(z)`, with closed-form Gaussian oracles.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flowmatch::{integrate, Direction, FlowModel, OdeConfig, VelocityField};
use crate::ndmath::{solve_lower, spd_inverse, FullGaussian, Matrix, RngState};
use crate::transport::w2_assignment;
use crate::wgf::{tv_1d_grid, DiagGaussianState};

/// Invertible map from latent space to data space.
pub trait Generator: Sync {
    fn dim(&self) -> usize;
    fn forward(&self, z: &[f64]) -> Result<Vec<f64>>;
    fn inverse(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// `J(z)ᵀ v` with `J` the Jacobian of `forward` at `z`.
    fn vjp(&self, z: &[f64], v: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentityGenerator {
    pub dim: usize,
}

impl Generator for IdentityGenerator {
    fn dim(&self) -> usize {
        self.dim
    }
    fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(z.to_vec())
    }
    fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }
    fn vjp(&self, _z: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok(v.to_vec())
    }
}

/// `x = A z + b` with `A` lower triangular and nonsingular, so the prior on
/// `x` is `N(b, AAᵀ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineGenerator {
    a: Matrix,
    b: Vec<f64>,
}

impl AffineGenerator {
    pub fn new(a: Matrix, b: Vec<f64>) -> Result<Self> {
        if !a.is_square() || a.rows() != b.len() {
            return Err(Error::shape("AffineGenerator", format!("{0}x{0}", b.len()), format!("{:?}", a.shape())));
        }
        for i in 0..a.rows() {
            for j in i + 1..a.cols() {
                if a[(i, j)] != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "AffineGenerator needs lower-triangular A; entry ({i}, {j}) is {}",
                        a[(i, j)]
                    )));
                }
            }
            if a[(i, i)] == 0.0 {
                return Err(Error::Singular { pivot: i });
            }
        }
        Ok(Self { a, b })
    }

    /// Generator whose pushforward of `N(0, I)` is exactly `g`.
    pub fn from_gaussian(g: &FullGaussian) -> Self {
        Self {
            a: g.cholesky_factor().clone(),
            b: g.mean().to_vec(),
        }
    }

    pub fn linear(&self) -> &Matrix {
        &self.a
    }

    pub fn offset(&self) -> &[f64] {
        &self.b
    }

    /// `N(b, AAᵀ)`.
    pub fn prior(&self) -> Result<FullGaussian> {
        FullGaussian::new(self.b.clone(), self.a.matmul(&self.a.transpose())?.symmetrize())
    }
}

impl Generator for AffineGenerator {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.a.matvec(z)?;
        for (x, b) in x.iter_mut().zip(&self.b) {
            *x += b;
        }
        Ok(x)
    }
    fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::shape("AffineGenerator::inverse", self.dim(), x.len()));
        }
        let shifted: Vec<f64> = x.iter().zip(&self.b).map(|(x, b)| x - b).collect();
        Ok(solve_lower(&self.a, &shifted))
    }
    fn vjp(&self, _z: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.a.matvec_t(v)
    }
}

/// A trained flow as a generator: `forward` runs the reverse (generating)
/// flow from the reference, `inverse` the forward flow. Jacobians come from
/// central differences of `forward` with step `1e-4`.
#[derive(Clone, Debug)]
pub struct FlowGenerator {
    model: FlowModel,
    steps: usize,
}

/// Finite-difference step of [`FlowGenerator::vjp`].
pub const FLOW_JACOBIAN_STEP: f64 = 1e-4;

impl FlowGenerator {
    /// Checks `inverse ∘ forward ≈ id` within `tol` on `probes` reference
    /// draws before accepting the model.
    pub fn new(model: FlowModel, steps: usize, tol: f64, probes: usize, rng: &mut RngState) -> Result<Self> {
        if model.context_dim() != 0 {
            return Err(Error::InvalidArgument("conditional flows cannot act as generators".into()));
        }
        let gen = Self { model, steps };
        for _ in 0..probes {
            let z = rng.normal_vec(gen.dim());
            let back = gen.inverse(&gen.forward(&z)?)?;
            let err = z.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if !(err <= tol) {
                return Err(Error::InvalidArgument(format!(
                    "flow generator is not invertible to {tol:e}: round-trip error {err:e}"
                )));
            }
        }
        Ok(gen)
    }

    pub fn model(&self) -> &FlowModel {
        &self.model
    }

    fn run(&self, x: &[f64], direction: Direction) -> Result<Vec<f64>> {
        integrate(&self.model, x, &OdeConfig::rk4(self.steps, direction), None)
    }
}

impl Generator for FlowGenerator {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.run(z, Direction::Reverse)
    }
    fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.run(x, Direction::Forward)
    }
    fn vjp(&self, z: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let h = FLOW_JACOBIAN_STEP;
        let mut p = z.to_vec();
        (0..z.len())
            .map(|j| {
                let orig = p[j];
                p[j] = orig + h;
                let up = self.forward(&p)?;
                p[j] = orig - h;
                let down = self.forward(&p)?;
                p[j] = orig;
                // column j of J, dotted with v
                Ok(up.iter().zip(&down).zip(v).map(|((u, d), v)| (u - d) / (2.0 * h) * v).sum())
            })
            .collect()
    }
}

/// `y = Hx + n`, `n ~ N(0, σ² I)`. `H` may have zero rows.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianLikelihood {
    h: Matrix,
    noise_var: f64,
    y: Vec<f64>,
}

impl LinearGaussianLikelihood {
    pub fn new(h: Matrix, noise_var: f64, y: Vec<f64>) -> Result<Self> {
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(Error::InvalidArgument(format!("noise variance must be > 0, got {noise_var}")));
        }
        if h.rows() != y.len() {
            return Err(Error::shape("likelihood observations", h.rows(), y.len()));
        }
        Ok(Self { h, noise_var, y })
    }

    /// No observations in `d` dimensions.
    pub fn uninformative(d: usize) -> Self {
        Self {
            h: Matrix::zeros(0, d),
            noise_var: 1.0,
            y: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.h.cols()
    }

    pub fn operator(&self) -> &Matrix {
        &self.h
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.h.matvec(x)?;
        for (r, y) in r.iter_mut().zip(&self.y) {
            *r -= y;
        }
        Ok(r)
    }

    /// `‖Hx − y‖² / (2σ²)`, the negative log-likelihood up to a constant.
    pub fn neg_log_lik(&self, x: &[f64]) -> Result<f64> {
        let r = self.residual(x)?;
        Ok(r.iter().map(|v| v * v).sum::<f64>() / (2.0 * self.noise_var))
    }
}

/// `Hᵀ(Hx − y) / σ²`.
pub fn neg_log_lik_grad(lik: &LinearGaussianLikelihood, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != lik.dim() {
        return Err(Error::shape("neg_log_lik_grad", lik.dim(), x.len()));
    }
    let r = lik.residual(x)?;
    let mut g = lik.h.matvec_t(&r)?;
    g.iter_mut().for_each(|v| *v /= lik.noise_var);
    Ok(g)
}

/// `∇_z 𝓛_y(T₀(z))` by the chain rule.
pub fn latent_grad<G: Generator + ?Sized>(gen: &G, lik: &LinearGaussianLikelihood, z: &[f64]) -> Result<Vec<f64>> {
    let x = gen.forward(z)?;
    gen.vjp(z, &neg_log_lik_grad(lik, &x)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LangevinConfig {
    pub step: f64,
    /// Steps per chain, burn-in included.
    pub steps: usize,
    /// Defaults to 20% of `steps`.
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub seed: u64,
    /// Independent chains, each on its own stream of `seed`.
    pub chains: usize,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            steps: 20_000,
            burn_in: None,
            thin: 10,
            seed: 0,
            chains: 1,
        }
    }
}

impl LangevinConfig {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.steps / 5)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidArgument(format!("Langevin step must be > 0, got {}", self.step)));
        }
        if self.burn_in() >= self.steps {
            return Err(Error::InvalidArgument(format!(
                "burn-in {} must be below the step count {}",
                self.burn_in(),
                self.steps
            )));
        }
        if self.thin == 0 || self.chains == 0 {
            return Err(Error::InvalidArgument("thin and chains must be >= 1".into()));
        }
        Ok(())
    }

    /// Kept samples per chain.
    pub fn kept_per_chain(&self) -> usize {
        (self.steps - self.burn_in()).div_ceil(self.thin)
    }
}

fn run_chain<G: Generator + ?Sized>(
    gen: &G,
    lik: &LinearGaussianLikelihood,
    cfg: &LangevinConfig,
    chain: usize,
) -> Result<Vec<f64>> {
    let d = gen.dim();
    let mut rng = RngState::with_stream(cfg.seed, chain as u64);
    let mut z = rng.normal_vec(d);
    let burn = cfg.burn_in();
    let noise = (2.0 * cfg.step).sqrt();
    let mut out = Vec::with_capacity(cfg.kept_per_chain() * d);
    for k in 0..cfg.steps {
        let g = latent_grad(gen, lik, &z)?;
        for i in 0..d {
            z[i] += -cfg.step * (z[i] + g[i]) + noise * rng.normal();
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "latent_langevin",
                step: k,
            });
        }
        if k >= burn && (k - burn).is_multiple_of(cfg.thin) {
            out.extend(gen.forward(&z)?);
        }
    }
    Ok(out)
}

/// Unadjusted Langevin chain
/// `z ← z − h (z + ∇_z 𝓛_y(T₀(z))) + √(2h) ξ` started from a prior draw.
/// Returns the kept samples pushed to data space, chain by chain.
pub fn latent_langevin<G: Generator + ?Sized>(
    gen: &G,
    lik: &LinearGaussianLikelihood,
    cfg: &LangevinConfig,
) -> Result<Matrix> {
    cfg.validate()?;
    if lik.dim() != gen.dim() {
        return Err(Error::shape("latent_langevin likelihood", gen.dim(), lik.dim()));
    }
    let chains = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(gen, lik, cfg, c))
        .collect::<Result<Vec<_>>>()?;
    let data: Vec<f64> = chains.into_iter().flatten().collect();
    Matrix::new(data.len() / gen.dim(), gen.dim(), data)
}

/// Exact data-space posterior for an affine generator and linear-Gaussian
/// likelihood: precision `Σ⁻¹ + HᵀH/σ²`, mean from the normal equations.
pub fn oracle_posterior(gen: &AffineGenerator, lik: &LinearGaussianLikelihood) -> Result<FullGaussian> {
    if lik.dim() != gen.dim() {
        return Err(Error::shape("oracle_posterior", gen.dim(), lik.dim()));
    }
    let prior = gen.prior()?;
    let prior_prec = prior.precision();
    let ht = lik.h.transpose();
    let data_prec = ht.matmul(&lik.h)?.scale(1.0 / lik.noise_var);
    let prec = prior_prec.add(&data_prec)?.symmetrize();
    let cov = spd_inverse(&prec)?.symmetrize();
    let mut rhs = prior_prec.matvec(prior.mean())?;
    for (r, v) in rhs.iter_mut().zip(ht.matvec(&lik.y)?) {
        *r += v / lik.noise_var;
    }
    let mean = cov.matvec(&rhs)?;
    FullGaussian::new(mean, cov)
}

/// Stationary variance of ULA on the 1-d target `N(μ, 1/a)`:
/// `2 / (a (2 − h a))`, finite for `h a < 2`.
pub fn ula_stationary_variance(rate: f64, step: f64) -> f64 {
    2.0 / (rate * (2.0 - step * rate))
}

/// Measured prior and posterior discrepancies; see [`error_transfer_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorTransferReport {
    /// Grid TV between moment fits in 1-d, otherwise W2 between equal-size
    /// clouds.
    pub prior_disc: f64,
    /// Same measure between the posterior sampled under the model prior and
    /// the oracle posterior under the true prior.
    pub post_disc: f64,
    /// Same measure for the posterior sampled under the true prior: the
    /// sampler-only error.
    pub sampler_disc: f64,
    /// `‖mean − oracle mean‖₂` for the model-prior posterior.
    pub post_mean_err: f64,
    /// Largest absolute covariance-entry error for the model-prior posterior.
    pub post_var_err: f64,
}

const GRID_POINTS: usize = 4001;

fn subsample(m: &Matrix, n: usize) -> Matrix {
    if m.rows() <= n {
        return m.clone();
    }
    let stride = m.rows() as f64 / n as f64;
    let idx: Vec<usize> = (0..n).map(|i| (i as f64 * stride) as usize).collect();
    m.select_rows(&idx)
}

/// Distance from a sample cloud to a Gaussian: grid TV between the moment fit
/// and `truth` in 1-d, otherwise W2 against an equal-size draw from `truth`
/// (at most [`MAX_ASSIGNMENT_SIZE`](crate::transport::MAX_ASSIGNMENT_SIZE)
/// rows, strided).
pub fn gaussian_discrepancy(samples: &Matrix, truth: &FullGaussian, rng: &mut RngState) -> Result<f64> {
    if truth.dim() == 1 {
        let fit = FullGaussian::fit(samples)?;
        let a = DiagGaussianState::new(fit.mean().to_vec(), vec![fit.cov()[(0, 0)].sqrt()])?;
        let b = DiagGaussianState::new(truth.mean().to_vec(), vec![truth.cov()[(0, 0)].sqrt()])?;
        Ok(tv_1d_grid(&a, &b, 0, GRID_POINTS))
    } else {
        let x = subsample(samples, crate::transport::MAX_ASSIGNMENT_SIZE);
        let y = truth.sample(rng, x.rows())?;
        Ok(w2_assignment(&x, &y)?.0)
    }
}

/// Measures how prior-modeling error shows up in the posterior. The model
/// prior is the moment fit of `model_prior_samples`; both Langevin runs use
/// the same `cfg` (and hence the same noise), once with the model prior and
/// once with the true prior, and are compared with the oracle posterior
/// under the true prior.
pub fn error_transfer_report(
    true_prior: &FullGaussian,
    model_prior_samples: &Matrix,
    lik: &LinearGaussianLikelihood,
    cfg: &LangevinConfig,
) -> Result<ErrorTransferReport> {
    let d = true_prior.dim();
    if model_prior_samples.cols() != d {
        return Err(Error::shape("error_transfer_report", d, model_prior_samples.cols()));
    }
    let model_gen = AffineGenerator::from_gaussian(&FullGaussian::fit(model_prior_samples)?);
    let true_gen = AffineGenerator::from_gaussian(true_prior);
    let oracle = oracle_posterior(&true_gen, lik)?;
    let mut rng = RngState::with_stream(cfg.seed, u64::MAX);
    let prior_disc = gaussian_discrepancy(model_prior_samples, true_prior, &mut rng)?;
    let model_post = latent_langevin(&model_gen, lik, cfg)?;
    let true_post = latent_langevin(&true_gen, lik, cfg)?;
    let post_disc = gaussian_discrepancy(&model_post, &oracle, &mut rng)?;
    let sampler_disc = gaussian_discrepancy(&true_post, &oracle, &mut rng)?;
    let fit = FullGaussian::fit(&model_post)?;
    let post_mean_err = fit
        .mean()
        .iter()
        .zip(oracle.mean())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let post_var_err = fit.cov().sub(oracle.cov())?.max_abs();
    Ok(ErrorTransferReport {
        prior_disc,
        post_disc,
        sampler_disc,
        post_mean_err,
        post_var_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_rows(&[[v]]).unwrap()
    }

    fn moments_1d(m: &Matrix) -> (f64, f64) {
        let n = m.rows() as f64;
        let mean = m.column(0).iter().sum::<f64>() / n;
        (mean, m.column(0).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn likelihood_gradient_examples() {
        let lik = LinearGaussianLikelihood::new(Matrix::identity(2), 1.0, vec![0.3, -0.2]).unwrap();
        assert_eq!(neg_log_lik_grad(&lik, &[0.3, -0.2]).unwrap(), vec![0.0, 0.0]);
        let lik = LinearGaussianLikelihood::new(scalar(1.0), 1.0, vec![1.0]).unwrap();
        assert_eq!(neg_log_lik_grad(&lik, &[0.0]).unwrap(), vec![-1.0]);
        assert!(LinearGaussianLikelihood::new(scalar(1.0), 0.0, vec![1.0]).is_err());
        let none = LinearGaussianLikelihood::uninformative(3);
        assert_eq!(neg_log_lik_grad(&none, &[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn likelihood_gradient_matches_finite_differences() {
        let mut rng = RngState::new(1);
        let h = Matrix::from_fn(2, 3, |_, _| rng.normal());
        let lik = LinearGaussianLikelihood::new(h, 0.7, rng.normal_vec(2)).unwrap();
        let x = rng.normal_vec(3);
        let g = neg_log_lik_grad(&lik, &x).unwrap();
        let eps = 1e-6;
        for j in 0..3 {
            let mut p = x.clone();
            let mut m = x.clone();
            p[j] += eps;
            m[j] -= eps;
            let fd = (lik.neg_log_lik(&p).unwrap() - lik.neg_log_lik(&m).unwrap()) / (2.0 * eps);
            assert!((fd - g[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn affine_generator_validation_and_roundtrip() {
        assert!(AffineGenerator::new(Matrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap(), vec![0.0; 2]).is_err());
        assert!(AffineGenerator::new(Matrix::from_rows(&[[1.0, 0.0], [0.5, 0.0]]).unwrap(), vec![0.0; 2]).is_err());
        let g = AffineGenerator::new(Matrix::from_rows(&[[2.0, 0.0], [0.5, -1.0]]).unwrap(), vec![1.0, 2.0]).unwrap();
        let z = [0.3, -0.7];
        let back = g.inverse(&g.forward(&z).unwrap()).unwrap();
        assert!((back[0] - z[0]).abs() < 1e-15 && (back[1] - z[1]).abs() < 1e-15);
    }

    #[test]
    fn latent_gradient_matches_finite_differences() {
        let mut rng = RngState::new(2);
        let gen = AffineGenerator::new(Matrix::from_rows(&[[1.5, 0.0], [0.4, 0.8]]).unwrap(), vec![0.2, -0.1]).unwrap();
        let lik = LinearGaussianLikelihood::new(Matrix::from_fn(3, 2, |_, _| rng.normal()), 0.5, rng.normal_vec(3)).unwrap();
        let z = rng.normal_vec(2);
        let g = latent_grad(&gen, &lik, &z).unwrap();
        let f = |z: &[f64]| lik.neg_log_lik(&gen.forward(z).unwrap()).unwrap();
        let eps = 1e-6;
        for j in 0..2 {
            let mut p = z.clone();
            let mut m = z.clone();
            p[j] += eps;
            m[j] -= eps;
            assert!(((f(&p) - f(&m)) / (2.0 * eps) - g[j]).abs() < 1e-5);
        }
    }

    #[test]
    fn oracle_posterior_examples() {
        let lik = LinearGaussianLikelihood::new(scalar(1.0), 1.0, vec![1.0]).unwrap();
        let id = AffineGenerator::new(scalar(1.0), vec![0.0]).unwrap();
        let p = oracle_posterior(&id, &lik).unwrap();
        assert!((p.mean()[0] - 0.5).abs() < 1e-15 && (p.cov()[(0, 0)] - 0.5).abs() < 1e-15);
        let two = AffineGenerator::new(scalar(2.0), vec![0.0]).unwrap();
        let p = oracle_posterior(&two, &lik).unwrap();
        assert!((p.mean()[0] - 0.8).abs() < 1e-14 && (p.cov()[(0, 0)] - 0.8).abs() < 1e-14);
        let vague = LinearGaussianLikelihood::new(scalar(1.0), 1e12, vec![1.0]).unwrap();
        let p = oracle_posterior(&two, &vague).unwrap();
        assert!(p.mean()[0].abs() < 1e-10 && (p.cov()[(0, 0)] - 4.0).abs() < 1e-10);
        let blind = LinearGaussianLikelihood::new(scalar(0.0), 1.0, vec![5.0]).unwrap();
        let p = oracle_posterior(&two, &blind).unwrap();
        assert_eq!(p.mean()[0], 0.0);
        assert!((p.cov()[(0, 0)] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn langevin_config_validation() {
        let bad = LangevinConfig { burn_in: Some(100), steps: 100, ..LangevinConfig::default() };
        assert!(bad.validate().is_err());
        assert!(LangevinConfig { step: 0.0, ..LangevinConfig::default() }.validate().is_err());
        let cfg = LangevinConfig { steps: 1000, thin: 10, ..LangevinConfig::default() };
        assert_eq!(cfg.burn_in(), 200);
        assert_eq!(cfg.kept_per_chain(), 80);
    }

    #[test]
    fn langevin_is_reproducible_and_shaped() {
        let gen = IdentityGenerator { dim: 2 };
        let lik = LinearGaussianLikelihood::new(Matrix::identity(2), 1.0, vec![1.0, -1.0]).unwrap();
        let cfg = LangevinConfig { step: 1e-2, steps: 2000, chains: 3, seed: 4, ..LangevinConfig::default() };
        let a = latent_langevin(&gen, &lik, &cfg).unwrap();
        let b = latent_langevin(&gen, &lik, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), (3 * cfg.kept_per_chain(), 2));
    }

    #[test]
    fn langevin_large_step_bias_matches_ula_variance() {
        // target N(0.5, 0.5) has rate a = 2; ULA inflates the variance
        let gen = IdentityGenerator { dim: 1 };
        let lik = LinearGaussianLikelihood::new(scalar(1.0), 1.0, vec![1.0]).unwrap();
        let mut vars = Vec::new();
        for &h in &[0.4, 0.2, 0.1] {
            let cfg = LangevinConfig { step: h, steps: 100_000, thin: 1, chains: 4, seed: 5, ..LangevinConfig::default() };
            let (mean, var) = moments_1d(&latent_langevin(&gen, &lik, &cfg).unwrap());
            assert!((mean - 0.5).abs() < 0.02);
            assert!((var - ula_stationary_variance(2.0, h)).abs() < 0.02, "h={h} var={var}");
            vars.push(var);
        }
        assert!(vars[0] > vars[1] && vars[1] > vars[2]);
    }

    #[test]
    fn uninformative_likelihood_recovers_prior() {
        let gen = AffineGenerator::new(scalar(2.0), vec![1.0]).unwrap();
        let lik = LinearGaussianLikelihood::new(scalar(1.0), 1e6, vec![1.0]).unwrap();
        let cfg = LangevinConfig { step: 1e-2, steps: 50_000, chains: 4, seed: 6, ..LangevinConfig::default() };
        let (mean, var) = moments_1d(&latent_langevin(&gen, &lik, &cfg).unwrap());
        assert!((mean - 1.0).abs() < 0.15 && (var - 4.0).abs() < 0.4, "{mean} {var}");
    }
}
