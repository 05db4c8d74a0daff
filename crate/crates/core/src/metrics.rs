//! Two-sample diagnostics: kernel MMD, per-coordinate KS distances,
//! correlation-structure differences, ECDF export and a permutation test.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ndmath::{format_f64, mean_cov, sq_dist, Matrix, RngState};

/// Pooled rows beyond this are strided down before the median heuristic.
pub const MEDIAN_HEURISTIC_MAX_ROWS: usize = 2000;

fn check_dims(x: &Matrix, y: &Matrix, context: &'static str) -> Result<()> {
    if x.cols() != y.cols() {
        return Err(Error::shape(context, x.cols(), y.cols()));
    }
    Ok(())
}

fn stride_rows(m: &Matrix, max: usize) -> Matrix {
    if m.rows() <= max {
        return m.clone();
    }
    let idx: Vec<usize> = (0..max).map(|i| i * m.rows() / max).collect();
    m.select_rows(&idx)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median pairwise Euclidean distance over the pooled sample.
pub fn median_heuristic(x: &Matrix, y: &Matrix) -> Result<f64> {
    check_dims(x, y, "median_heuristic")?;
    let pooled = stride_rows(&x.vstack(y)?, MEDIAN_HEURISTIC_MAX_ROWS);
    let n = pooled.rows();
    if n < 2 {
        return Err(Error::InsufficientRows {
            context: "median_heuristic",
            needed: 2,
            actual: n,
        });
    }
    let mut dists: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let p = &pooled;
            (i + 1..n).map(move |j| sq_dist(p.row(i), p.row(j)).sqrt())
        })
        .collect();
    let m = median(&mut dists);
    if !(m > 0.0) {
        return Err(Error::InvalidArgument(
            "median heuristic bandwidth is zero (points are identical)".into(),
        ));
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmdEstimator {
    Biased,
    Unbiased,
}

impl MmdEstimator {
    pub fn name(self) -> &'static str {
        match self {
            MmdEstimator::Biased => "biased",
            MmdEstimator::Unbiased => "unbiased",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "biased" => Ok(MmdEstimator::Biased),
            "unbiased" => Ok(MmdEstimator::Unbiased),
            _ => Err(Error::InvalidArgument(format!("unknown MMD estimator {s:?}"))),
        }
    }
}

/// RBF kernel `exp(−‖a − b‖² / (2σ²))` and estimator choice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmdConfig {
    pub bandwidth: f64,
    pub estimator: MmdEstimator,
}

impl MmdConfig {
    pub fn new(bandwidth: f64, estimator: MmdEstimator) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidArgument(format!("bandwidth must be > 0, got {bandwidth}")));
        }
        Ok(Self {
            bandwidth,
            estimator,
        })
    }

    /// Unbiased estimator with the median-heuristic bandwidth.
    pub fn median_heuristic(x: &Matrix, y: &Matrix) -> Result<Self> {
        Self::new(median_heuristic(x, y)?, MmdEstimator::Unbiased)
    }
}

/// `(sum of all entries, sum of the diagonal)` of the kernel block.
fn kernel_sum(a: &Matrix, b: &Matrix, inv2s2: f64) -> (f64, f64) {
    let total = (0..a.rows())
        .into_par_iter()
        .map(|i| {
            let ai = a.row(i);
            b.row_iter().map(|bj| (-sq_dist(ai, bj) * inv2s2).exp()).sum::<f64>()
        })
        .sum();
    let diag = (0..a.rows().min(b.rows()))
        .map(|i| (-sq_dist(a.row(i), b.row(i)) * inv2s2).exp())
        .sum();
    (total, diag)
}

/// Squared MMD; the unbiased estimate can be negative.
pub fn mmd(x: &Matrix, y: &Matrix, cfg: &MmdConfig) -> Result<f64> {
    check_dims(x, y, "mmd")?;
    let need = match cfg.estimator {
        MmdEstimator::Biased => 1,
        MmdEstimator::Unbiased => 2,
    };
    for (m, context) in [(x, "mmd x"), (y, "mmd y")] {
        if m.rows() < need {
            return Err(Error::InsufficientRows {
                context,
                needed: need,
                actual: m.rows(),
            });
        }
    }
    let inv = 1.0 / (2.0 * cfg.bandwidth * cfg.bandwidth);
    let (n, m) = (x.rows() as f64, y.rows() as f64);
    let (kxx, dxx) = kernel_sum(x, x, inv);
    let (kyy, dyy) = kernel_sum(y, y, inv);
    let (kxy, _) = kernel_sum(x, y, inv);
    Ok(match cfg.estimator {
        MmdEstimator::Biased => kxx / (n * n) + kyy / (m * m) - 2.0 * kxy / (n * m),
        MmdEstimator::Unbiased => {
            (kxx - dxx) / (n * (n - 1.0)) + (kyy - dyy) / (m * (m - 1.0)) - 2.0 * kxy / (n * m)
        }
    })
}

fn sorted(v: Vec<f64>) -> Vec<f64> {
    let mut v = v;
    v.sort_by(f64::total_cmp);
    v
}

/// Sup distance between the two empirical CDFs of each coordinate.
pub fn ks_per_coordinate(x: &Matrix, y: &Matrix) -> Result<Vec<f64>> {
    check_dims(x, y, "ks_per_coordinate")?;
    if x.rows() == 0 || y.rows() == 0 {
        return Err(Error::InsufficientRows {
            context: "ks_per_coordinate",
            needed: 1,
            actual: 0,
        });
    }
    Ok((0..x.cols())
        .map(|j| {
            let a = sorted(x.column(j));
            let b = sorted(y.column(j));
            let (na, nb) = (a.len() as f64, b.len() as f64);
            let (mut i, mut k, mut best) = (0, 0, 0.0f64);
            while i < a.len() || k < b.len() {
                // advance past every copy of the next jump point in both samples
                let v = match (a.get(i), b.get(k)) {
                    (Some(&p), Some(&q)) => p.min(q),
                    (Some(&p), None) => p,
                    (None, Some(&q)) => q,
                    (None, None) => unreachable!(),
                };
                while i < a.len() && a[i] <= v {
                    i += 1;
                }
                while k < b.len() && b[k] <= v {
                    k += 1;
                }
                best = best.max((i as f64 / na - k as f64 / nb).abs());
            }
            best
        })
        .collect())
}

/// Pearson correlation matrix; zero-variance columns are an error.
pub fn correlation(x: &Matrix, context: &'static str) -> Result<Matrix> {
    let (_, cov) = mean_cov(x)?;
    let sd: Vec<f64> = cov.diag().iter().map(|v| v.sqrt()).collect();
    if let Some(index) = sd.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::ZeroVariance { context, index });
    }
    let d = x.cols();
    Ok(Matrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            (cov[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
        }
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrDiff {
    pub corr_x: Matrix,
    pub corr_y: Matrix,
    /// Frobenius norm of `corr_x − corr_y`.
    pub fro: f64,
}

pub fn corr_diff(x: &Matrix, y: &Matrix) -> Result<CorrDiff> {
    check_dims(x, y, "corr_diff")?;
    let corr_x = correlation(x, "corr_diff first sample")?;
    let corr_y = correlation(y, "corr_diff second sample")?;
    let fro = corr_x.sub(&corr_y)?.frobenius_norm();
    Ok(CorrDiff { corr_x, corr_y, fro })
}

/// `(value, F(value))` at each distinct sorted value.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let v = sorted(values.to_vec());
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = p,
            _ => out.push((*x, p)),
        }
    }
    out
}

/// Long-format CSV `coordinate,value,cdf` for every column.
pub fn write_ecdf_csv<W: Write>(mut w: W, x: &Matrix, names: &[impl AsRef<str>]) -> Result<()> {
    if names.len() != x.cols() {
        return Err(Error::shape("write_ecdf_csv names", x.cols(), names.len()));
    }
    writeln!(w, "coordinate,value,cdf")?;
    for (j, name) in names.iter().enumerate() {
        for (v, p) in ecdf(&x.column(j)) {
            writeln!(w, "{},{},{}", name.as_ref(), format_f64(v), format_f64(p))?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PermutationTest {
    pub statistic: f64,
    /// `(1 + #{permuted ≥ observed}) / (1 + permutations)`.
    pub p_value: f64,
    pub permutations: usize,
}

/// Label-permutation test of `statistic(x, y)` against the pooled sample.
pub fn permutation_test<F>(
    x: &Matrix,
    y: &Matrix,
    statistic: F,
    permutations: usize,
    rng: &mut RngState,
) -> Result<PermutationTest>
where
    F: Fn(&Matrix, &Matrix) -> Result<f64> + Sync,
{
    check_dims(x, y, "permutation_test")?;
    let observed = statistic(x, y)?;
    let pooled = x.vstack(y)?;
    let n = x.rows();
    let orders: Vec<Vec<usize>> = (0..permutations).map(|_| rng.permutation(pooled.rows())).collect();
    let stats = orders
        .par_iter()
        .map(|o| statistic(&pooled.select_rows(&o[..n]), &pooled.select_rows(&o[n..])))
        .collect::<Result<Vec<_>>>()?;
    let exceed = stats.iter().filter(|s| **s >= observed).count();
    Ok(PermutationTest {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        permutations,
    })
}
