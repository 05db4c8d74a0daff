use super::schedule::ou_marginal;
use crate::error::{Error, Result};
use crate::ndmath::{FullGaussian, Matrix, RngState};

/// Finite Gaussian mixture with analytic log-density and score.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<FullGaussian>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<FullGaussian>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::shape("GaussianMixture", weights.len(), components.len()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidArgument("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let d = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != d) {
            return Err(Error::shape("GaussianMixture components", d, c.dim()));
        }
        Ok(Self { weights, components })
    }

    pub fn single(g: FullGaussian) -> Self {
        Self {
            weights: vec![1.0],
            components: vec![g],
        }
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[FullGaussian] {
        &self.components
    }

    fn log_terms(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w.ln() + c.log_density(x))
            .collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let terms = self.log_terms(x);
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return m;
        }
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
    }

    /// `∇ log p(x)`, with responsibilities computed in log space.
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        let terms = self.log_terms(x);
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::NonFinite {
                context: "mixture score (zero density)",
                step: 0,
            });
        }
        let resp: Vec<f64> = terms.iter().map(|t| (t - m).exp()).collect();
        let z: f64 = resp.iter().sum();
        let mut out = vec![0.0; x.len()];
        for (r, c) in resp.iter().zip(&self.components) {
            for (o, s) in out.iter_mut().zip(c.score(x)) {
                *o += r / z * s;
            }
        }
        Ok(out)
    }

    /// Componentwise OU marginal at time `t`.
    pub fn ou_marginal(&self, t: f64) -> Result<Self> {
        Ok(Self {
            weights: self.weights.clone(),
            components: self
                .components
                .iter()
                .map(|c| ou_marginal(c, t))
                .collect::<Result<_>>()?,
        })
    }

    pub fn sample(&self, rng: &mut RngState, n: usize) -> Result<Matrix> {
        let d = self.dim();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let u = rng.uniform();
            let mut acc = 0.0;
            let mut k = self.weights.len() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    k = i;
                    break;
                }
            }
            data.extend_from_slice(self.components[k].sample(rng, 1)?.row(0));
        }
        Matrix::new(n, d, data)
    }
}

/// Exact score of a Gaussian mixture at `x`.
pub fn analytic_score(mixture: &GaussianMixture, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != mixture.dim() {
        return Err(Error::shape("analytic_score", mixture.dim(), x.len()));
    }
    mixture.score(x)
}
