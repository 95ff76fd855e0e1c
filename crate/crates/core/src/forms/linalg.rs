//! Small dense hermitian matrix kernels evaluated at every grid point.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

/// Relative pivot threshold for the positivity test.
pub const PIVOT_TOL: f64 = 1e-12;

/// Result of a pointwise Cholesky factorization.
#[derive(Clone, Debug)]
pub struct Cholesky {
    /// Lower-triangular factor with `A = L L*`.
    pub lower: CMatrix,
    /// Smallest pivot `L_jj²` divided by the largest diagonal entry of `A`.
    pub min_relative_pivot: f64,
}

impl Cholesky {
    pub fn det(&self) -> f64 {
        self.lower.diagonal().iter().map(|d| d.re * d.re).product()
    }
}

/// Cholesky factorization of a hermitian matrix. Fails with the offending
/// relative pivot when it drops to `PIVOT_TOL` or below.
pub fn cholesky(a: &CMatrix) -> Result<Cholesky, f64> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].re.abs()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return Err(0.0);
    }
    let mut lower = CMatrix::zeros(n, n);
    let mut min_pivot = f64::INFINITY;
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= lower[(j, k)].norm_sqr();
        }
        let rel = d / scale;
        if rel.is_nan() || rel <= PIVOT_TOL {
            return Err(if rel.is_nan() { 0.0 } else { rel });
        }
        min_pivot = min_pivot.min(rel);
        let ljj = d.sqrt();
        lower[(j, j)] = Complex64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= lower[(i, k)] * lower[(j, k)].conj();
            }
            lower[(i, j)] = s / ljj;
        }
    }
    Ok(Cholesky {
        lower,
        min_relative_pivot: min_pivot,
    })
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn lower_inverse(l: &CMatrix) -> CMatrix {
    let n = l.nrows();
    let mut inv = CMatrix::zeros(n, n);
    for col in 0..n {
        for i in col..n {
            let mut s = if i == col {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            for k in col..i {
                s -= l[(i, k)] * inv[(k, col)];
            }
            inv[(i, col)] = s / l[(i, i)];
        }
    }
    inv
}

/// Inverse of a hermitian positive definite matrix from its factorization.
pub fn spd_inverse(chol: &Cholesky) -> CMatrix {
    let linv = lower_inverse(&chol.lower);
    linv.adjoint() * linv
}

/// `max |A − A*|`.
pub fn hermitian_deviation(a: &CMatrix) -> f64 {
    (a - a.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Replaces `A` by `(A + A*)/2`.
pub fn symmetrize(a: &mut CMatrix) {
    let h = (&*a + a.adjoint()) * Complex64::new(0.5, 0.0);
    *a = h;
}

pub fn from_real_diagonal(d: &[f64]) -> CMatrix {
    let n = d.len();
    CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(d[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CMatrix {
        let c = |re, im| Complex64::new(re, im);
        CMatrix::from_row_slice(
            3,
            3,
            &[
                c(4.0, 0.0),
                c(1.0, 0.5),
                c(0.0, -0.3),
                c(1.0, -0.5),
                c(3.0, 0.0),
                c(0.2, 0.1),
                c(0.0, 0.3),
                c(0.2, -0.1),
                c(2.0, 0.0),
            ],
        )
    }

    #[test]
    fn cholesky_reconstructs_and_inverts() {
        let a = sample();
        let chol = cholesky(&a).unwrap();
        let back = &chol.lower * chol.lower.adjoint();
        assert!(max_abs(&(back - &a)) < 1e-14);
        let inv = spd_inverse(&chol);
        let id = &a * inv;
        assert!(max_abs(&(id - CMatrix::identity(3, 3))) < 1e-14);
        let det_lu = a.clone().determinant().re;
        assert!((chol.det() - det_lu).abs() < 1e-12);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let a = from_real_diagonal(&[1.0, -2.0, 1.0]);
        assert!(cholesky(&a).is_err());
        let near = from_real_diagonal(&[1.0, 1e-14, 1.0]);
        assert!(cholesky(&near).is_err());
    }
}
