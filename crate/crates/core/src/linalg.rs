//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for generalized inverses.
pub const PINV_RTOL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Moore–Penrose inverse of a symmetric matrix through its eigendecomposition,
/// dropping eigenvalues below `rtol·max|λ|`. Returns the inverse and the rank.
pub fn pinv_sym(m: &DMatrix<f64>, rtol: f64) -> (DMatrix<f64>, usize) {
    let n = m.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    let eig = symmetrize(m).symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut inv = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if top > 0.0 && lam.abs() > rtol * top {
            let v = eig.eigenvectors.column(k);
            inv += (v * v.transpose()) / lam;
            rank += 1;
        }
    }
    (inv, rank)
}

/// Numerical rank from singular values.
pub fn rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let top = sv.max();
    sv.iter().filter(|&&s| top > 0.0 && s > rtol * top).count()
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let (lo, hi) = (sv.min(), sv.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Inverse, failing when the condition number exceeds `max_cond`.
pub fn inverse_checked(m: &DMatrix<f64>, max_cond: f64, what: &str) -> Result<DMatrix<f64>> {
    let c = condition_number(m);
    if !(c <= max_cond) {
        return Err(Error::Singular(format!("{what} has condition number {c:.3e}")));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{what} is not invertible")))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigen().eigenvalues.min()
}

/// Quadratic form x'Ax.
pub fn quad_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(a * x))
}

/// Sample mean and covariance (denominator n - 1) of the rows.
pub fn mean_cov(rows: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    let mut mean = DVector::zeros(d);
    for r in rows {
        mean += DVector::from_column_slice(r);
    }
    mean /= n.max(1) as f64;
    let mut cov = DMatrix::zeros(d, d);
    for r in rows {
        let c = DVector::from_column_slice(r) - &mean;
        cov += &c * c.transpose();
    }
    cov /= (n.max(2) - 1) as f64;
    (mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_rank_one() {
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let m = &v * v.transpose();
        let (p, r) = pinv_sym(&m, PINV_RTOL);
        assert_eq!(r, 1);
        assert!((&m * &p * &m - &m).norm() < 1e-12);
        assert_eq!(rank(&m, PINV_RTOL), 1);
    }

    #[test]
    fn inverse_rejects_ill_conditioned() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-14]);
        assert!(inverse_checked(&m, 1e12, "m").is_err());
        let i = inverse_checked(&DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]), 1e12, "m").unwrap();
        assert!((i[(1, 1)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn covariance_of_rows() {
        let (m, c) = mean_cov(&[vec![1.0, 0.0], vec![3.0, 2.0]]);
        assert_eq!(m.as_slice(), &[2.0, 1.0]);
        assert_eq!(c[(0, 1)], 2.0);
        assert!(min_eigenvalue(&c).abs() < 1e-12);
    }
}
