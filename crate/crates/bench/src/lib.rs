//! Fixtures shared by the benchmarks.

use shiftgen_core::{Matrix, RngState};

/// `n × d` standard normal cloud from a fixed seed.
pub fn cloud(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = RngState::new(seed);
    Matrix::from_fn(n, d, |_, _| rng.normal())
}
