//! Small dense factorizations: Cholesky, LU with partial pivoting, and the
//! cyclic Jacobi eigensolver used for symmetric square roots.

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check on inputs to SPD routines.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub(crate) fn check_symmetric(a: &Matrix, context: &'static str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::shape(
            context,
            "square matrix",
            format!("{}x{}", a.rows(), a.cols()),
        ));
    }
    let (row, col, gap) = a.asymmetry().expect("square");
    if gap > SYMMETRY_TOL * a.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { row, col, gap });
    }
    Ok(())
}

/// Lower-triangular `L` with `L Lᵀ = a`.
///
/// Fails with the index of the first non-positive pivot when `a` is not
/// positive definite.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    check_symmetric(a, "cholesky")?;
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: diag,
            });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s = b[i] - dot(&l.row(i)[..i], &x[..i]);
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `a x = b` given the Cholesky factor of `a`.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    solve_lower_transpose(l, &solve_lower(l, b))
}

/// `ln det a` from its Cholesky factor.
pub fn cholesky_log_det(l: &Matrix) -> f64 {
    2.0 * l.diag().iter().map(|v| v.ln()).sum::<f64>()
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(a: &Matrix) -> Result<Matrix> {
    let l = cholesky(a)?;
    let n = a.rows();
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = cholesky_solve(&l, &e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Ok(inv.symmetrize())
}

/// LU factorization with partial pivoting, `P a = L U`.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn new(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::shape(
                "Lu::new",
                "square matrix",
                format!("{}x{}", a.rows(), a.cols()),
            ));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax <= 1e-14 * scale {
                return Err(Error::Singular { pivot: k });
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                for j in (k + 1)..n {
                    lu[(i, j)] -= f * lu[(k, j)];
                }
            }
        }
        Ok(Self { lu, perm, sign })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.lu[(i, k)] * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.lu.rows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }

    pub fn log_abs_det(&self) -> f64 {
        self.lu.diag().iter().map(|v| v.abs().ln()).sum()
    }

    pub fn det(&self) -> f64 {
        self.sign * self.lu.diag().iter().product::<f64>()
    }
}

/// General inverse via LU.
pub fn inverse(a: &Matrix) -> Result<Matrix> {
    Ok(Lu::new(a)?.inverse())
}

/// Eigen-decomposition `a = V diag(λ) Vᵀ` of a symmetric matrix by cyclic
/// Jacobi rotations. Eigenvalues are returned in ascending order with
/// eigenvectors as the matching columns of `V`.
pub fn sym_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    check_symmetric(a, "sym_eigen")?;
    let n = a.rows();
    let mut m = a.symmetrize();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let scale: f64 = m.as_slice().iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

/// `V diag(f(λ)) Vᵀ` for symmetric `a`.
pub fn sym_apply(a: &Matrix, f: impl Fn(f64) -> f64) -> Result<Matrix> {
    let (values, vectors) = sym_eigen(a)?;
    let n = a.rows();
    let fv: Vec<f64> = values.iter().map(|&l| f(l)).collect();
    let out = Matrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| vectors[(i, k)] * fv[k] * vectors[(j, k)])
            .sum()
    });
    Ok(out.symmetrize())
}

fn check_psd_values(a: &Matrix, strict: bool) -> Result<()> {
    let (values, _) = sym_eigen(a)?;
    let tol = 1e-12 * a.max_abs().max(f64::MIN_POSITIVE);
    for (i, &l) in values.iter().enumerate() {
        if (strict && l <= 0.0) || l < -tol {
            return Err(Error::NotPositiveDefinite { pivot: i, value: l });
        }
    }
    Ok(())
}

/// Principal square root of a symmetric positive semi-definite matrix.
/// Eigenvalues within round-off of zero are clamped.
pub fn sym_sqrt(a: &Matrix) -> Result<Matrix> {
    check_psd_values(a, false)?;
    sym_apply(a, |l| l.max(0.0).sqrt())
}

/// Inverse principal square root of a symmetric positive-definite matrix.
pub fn sym_inv_sqrt(a: &Matrix) -> Result<Matrix> {
    check_psd_values(a, true)?;
    sym_apply(a, |l| 1.0 / l.sqrt())
}
