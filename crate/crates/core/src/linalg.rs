//! Small dense symmetric helpers: Cholesky with a jitter ladder and
//! eigenvalue extremes.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Jitter values tried in order when factorizing.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Lower-triangular factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    pub lower: DMatrix<f64>,
    pub jitter: f64,
    pub is_diagonal: bool,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }
}

/// Plain Cholesky–Banachiewicz. On failure returns the 1-based index of the
/// first leading minor that is not positive definite.
fn factor_once(a: &DMatrix<f64>, jitter: f64) -> std::result::Result<DMatrix<f64>, usize> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            if i == j {
                s += jitter;
            }
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            if i == j {
                // zero pivots are allowed only when the whole column below is zero
                if s < 0.0 || !s.is_finite() {
                    return Err(i + 1);
                }
                l[(i, i)] = s.sqrt();
            } else if l[(j, j)] > 0.0 {
                l[(i, j)] = s / l[(j, j)];
            } else if s.abs() > 0.0 {
                return Err(j + 1);
            }
        }
    }
    Ok(l)
}

/// Factorizes `a` with the smallest jitter from [`JITTER_LADDER`] that succeeds.
///
/// Diagonal inputs (including semidefinite ones with zero entries) factor
/// exactly as their elementwise square root.
pub fn cholesky(a: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Invalid("cholesky needs a square matrix".into()));
    }
    let is_diagonal = (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] == 0.0));
    if is_diagonal {
        if let Some(i) = (0..n).find(|&i| !(a[(i, i)] >= 0.0)) {
            return Err(Error::Cholesky {
                minor: i + 1,
                jitter: 0.0,
            });
        }
        let lower = DMatrix::from_fn(n, n, |i, j| if i == j { a[(i, i)].sqrt() } else { 0.0 });
        return Ok(CholeskyFactor {
            lower,
            jitter: 0.0,
            is_diagonal,
        });
    }
    let mut last_minor = 0;
    for &jitter in &JITTER_LADDER {
        match factor_once(a, jitter) {
            Ok(lower) => {
                return Ok(CholeskyFactor {
                    lower,
                    jitter,
                    is_diagonal,
                })
            }
            Err(minor) => last_minor = minor,
        }
    }
    Err(Error::Cholesky {
        minor: last_minor,
        jitter: *JITTER_LADDER.last().unwrap(),
    })
}

const EIGEN_MAX_SWEEPS: usize = 10_000;

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, EIGEN_MAX_SWEEPS)
        .ok_or(Error::NoConvergence)?;
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    Ok(ev)
}

/// Largest eigenvalue of a symmetric matrix (0 for an empty matrix).
pub fn lambda_max(a: &DMatrix<f64>) -> Result<f64> {
    Ok(symmetric_eigenvalues(a)?.last().copied().unwrap_or(0.0))
}

/// Spectral norm of a symmetric matrix.
pub fn spectral_norm_sym(a: &DMatrix<f64>) -> Result<f64> {
    let ev = symmetric_eigenvalues(a)?;
    Ok(match (ev.first(), ev.last()) {
        (Some(lo), Some(hi)) => lo.abs().max(hi.abs()),
        _ => 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn diagonal_square_root() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.25]));
        let f = cholesky(&a).unwrap();
        assert_eq!(
            f.lower,
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.5]))
        );
        assert_eq!(f.jitter, 0.0);
        assert!(f.is_diagonal);

        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(cholesky(&id).unwrap().lower, id);
    }

    #[test]
    fn dense_reconstruction() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0]);
        let f = cholesky(&a).unwrap();
        let r = &f.lower * f.lower.transpose();
        assert!((r - &a).amax() < 1e-14);
        assert!(!f.is_diagonal);
    }

    #[test]
    fn semidefinite_rank_one() {
        let v = [1.0, 2.0, 3.0];
        let a = DMatrix::from_fn(3, 3, |i, j| v[i] * v[j]);
        let f = cholesky(&a).unwrap();
        let r = &f.lower * f.lower.transpose();
        assert!((r - (&a + DMatrix::identity(3, 3) * f.jitter)).amax() < 1e-10);
    }

    #[test]
    fn indefinite_names_minor() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match cholesky(&a) {
            Err(Error::Cholesky { minor, .. }) => assert_eq!(minor, 2),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn eigen_extremes() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert_abs_diff_eq!(lambda_max(&a).unwrap(), 3.0, epsilon = 1e-12);
        let b = DMatrix::from_row_slice(2, 2, &[-5.0, 0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(spectral_norm_sym(&b).unwrap(), 5.0, epsilon = 1e-12);
    }
}
