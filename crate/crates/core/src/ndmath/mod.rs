//! Dense linear algebra, seeded random streams, Gaussians and sample
//! statistics shared by every other module.

mod csvio;
mod gaussian;
mod linalg;
mod matrix;
mod rng;

pub use csvio::{
    default_header, format_f64, read_csv, read_csv_from, write_csv, write_csv_to, CsvTable,
};
pub use gaussian::{
    column_means, column_stds, gaussian_kl, mean_cov, sample_gaussian, AffineMap, FullGaussian,
};
pub use linalg::{
    cholesky, cholesky_log_det, cholesky_solve, inverse, solve_lower, solve_lower_transpose,
    spd_inverse, sym_apply, sym_eigen, sym_inv_sqrt, sym_sqrt, Lu, SYMMETRY_TOL,
};
pub use matrix::{axpy, dot, norm2, sq_dist, Matrix};
pub use rng::RngState;
