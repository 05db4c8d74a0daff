//! Built-in synthetic stand-ins for the outage-count and asset-return data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use shiftgen_core::Matrix;

pub const COUNTIES: usize = 10;

/// Over-dispersed correlated counts: a one-factor Gaussian copula drives
/// log-normal Poisson rates, so columns share a common shock with loadings
/// rising from 0.3 to 0.84 and mean log-rates from 1.0 to 2.8.
pub fn outage_counts(rows: usize, seed: u64) -> (Vec<String>, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let header = (1..=COUNTIES).map(|j| format!("county_{j:02}")).collect();
    let mut data = Vec::with_capacity(rows * COUNTIES);
    for _ in 0..rows {
        let f: f64 = StandardNormal.sample(&mut rng);
        for j in 0..COUNTIES {
            let load = 0.3 + 0.06 * j as f64;
            let e: f64 = StandardNormal.sample(&mut rng);
            let z = load * f + (1.0 - load * load).sqrt() * e;
            let rate = (1.0 + 0.2 * j as f64 + 0.8 * z).exp();
            let count: f64 = Poisson::new(rate).expect("positive finite rate").sample(&mut rng);
            data.push(count);
        }
    }
    (header, Matrix::new(rows, COUNTIES, data).expect("sized buffer"))
}

/// Single-factor returns `r_j = μ_j + b_j f + s_j e_j` with factor
/// volatility 0.04; later assets earn more and carry more factor risk.
pub fn factor_returns(rows: usize, assets: usize, seed: u64) -> (Vec<String>, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let header = (1..=assets).map(|j| format!("asset_{j}")).collect();
    let mut data = Vec::with_capacity(rows * assets);
    for _ in 0..rows {
        let f: f64 = StandardNormal.sample(&mut rng);
        for j in 0..assets {
            let j = j as f64;
            let e: f64 = StandardNormal.sample(&mut rng);
            data.push(0.004 + 0.002 * j + (0.6 + 0.15 * j) * 0.04 * f + (0.02 + 0.005 * j) * e);
        }
    }
    (header, Matrix::new(rows, assets, data).expect("sized buffer"))
}
