//! Transformed residual panels, sample autocovariances and the trace
//! objective Σ_h Tr[Γ̂(h)Γ̂(0)⁻¹Γ̂(h)'Γ̂(0)⁻¹].

use nalgebra::DMatrix;

use super::transform::TransformSet;
use crate::error::{Error, Result};

/// Condition number of Γ̂(0) above which a ridge is added.
pub const RIDGE_COND: f64 = 1e10;
/// Ridge size relative to the largest eigenvalue of the lag-0 correlation
/// matrix.
pub const RIDGE_SCALE: f64 = 1e-10;

/// Demeaned transformed residuals, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedPanel {
    cols: Vec<Vec<f64>>,
    t_e: usize,
}

impl TransformedPanel {
    /// Demean the given columns; all must have the same nonzero length.
    pub fn from_columns(mut cols: Vec<Vec<f64>>) -> Result<Self> {
        let t_e = cols.first().map_or(0, Vec::len);
        if t_e == 0 || cols.iter().any(|c| c.len() != t_e) {
            return Err(Error::Dimension("panel columns must be nonempty and of equal length".into()));
        }
        for c in &mut cols {
            if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(i));
            }
            let m = c.iter().sum::<f64>() / t_e as f64;
            c.iter_mut().for_each(|v| *v -= m);
        }
        Ok(TransformedPanel { cols, t_e })
    }

    pub fn rows(&self) -> usize {
        self.t_e
    }

    pub fn k(&self) -> usize {
        self.cols.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }

    /// Panel with columns A·(columns), for invariance checks.
    pub fn recombine(&self, a: &DMatrix<f64>) -> Result<Self> {
        if a.ncols() != self.k() {
            return Err(Error::Dimension("recombination matrix width must equal K".into()));
        }
        let cols = (0..a.nrows())
            .map(|i| (0..self.t_e).map(|t| (0..self.k()).map(|j| a[(i, j)] * self.cols[j][t]).sum()).collect())
            .collect();
        TransformedPanel::from_columns(cols)
    }
}

/// Apply each transform elementwise and demean; T_e = len(u).
pub fn apply_transforms(u: &[f64], ts: &TransformSet) -> Result<TransformedPanel> {
    if u.is_empty() {
        return Err(Error::Empty);
    }
    let mut cols = Vec::with_capacity(ts.k());
    for tr in ts.as_slice() {
        let mut c = Vec::with_capacity(u.len());
        for (i, &x) in u.iter().enumerate() {
            let v = tr.apply(x);
            if !v.is_finite() {
                return Err(Error::Transform { transform: tr.to_string(), index: i });
            }
            c.push(v);
        }
        cols.push(c);
    }
    TransformedPanel::from_columns(cols)
}

/// Γ̂(h)[i,j] = (1/T_e) Σ_{t>h} p[t,i]·p[t-h,j].
pub fn gamma_hat(p: &TransformedPanel, h: usize) -> Result<DMatrix<f64>> {
    if h >= p.t_e {
        return Err(Error::InvalidArgument(format!("lag {h} must be below the panel length {}", p.t_e)));
    }
    let k = p.k();
    let n = p.t_e as f64;
    Ok(DMatrix::from_fn(k, k, |i, j| {
        let (a, b) = (&p.cols[i][h..], &p.cols[j][..p.t_e - h]);
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n
    }))
}

/// Column scales 1/√Γ̂(0)[i,i] and the inverse square root of the
/// correlation matrix, with the ridge applied when it is ill conditioned.
/// Working in correlation units keeps the ridge invariant to column scale.
fn standardizer(g0: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = g0.nrows();
    let diag: Vec<f64> = (0..k).map(|i| g0[(i, i)]).collect();
    if diag.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::ZeroVariance);
    }
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(k, diag.iter().map(|v| 1.0 / v.sqrt())));
    let c = &d * g0 * &d;
    let mut eig = c.symmetric_eigen();
    let hi = eig.eigenvalues.max();
    let lo = eig.eigenvalues.min();
    if !(lo > 0.0) || hi / lo > RIDGE_COND {
        let ridge = RIDGE_SCALE * hi.max(1.0);
        eig.eigenvalues.iter_mut().for_each(|v| *v = v.max(0.0) + ridge);
    }
    let w = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    Ok((d, &eig.eigenvectors * w * eig.eigenvectors.transpose()))
}

/// Σ_{h=1..H} Tr[Γ̂(h)Γ̂(0)⁻¹Γ̂(h)'Γ̂(0)⁻¹], the sum of squared
/// multivariate autocorrelations; lies in [0, H·K].
pub fn trace_objective(p: &TransformedPanel, h_max: usize) -> Result<f64> {
    Ok(autocorrelation_matrices(p, h_max)?.iter().map(|r| r.norm_squared()).sum())
}

/// Autocorrelation matrices C^{-1/2}DΓ̂(h)DC^{-1/2}, h = 1..H, where D
/// holds the column scales and C is the lag-0 correlation matrix. They are
/// orthogonally similar to Γ̂(0)^{-1/2}Γ̂(h)Γ̂(0)^{-1/2} through one common
/// rotation.
pub fn autocorrelation_matrices(p: &TransformedPanel, h_max: usize) -> Result<Vec<DMatrix<f64>>> {
    if h_max == 0 {
        return Err(Error::InvalidArgument("H must be at least 1".into()));
    }
    if h_max >= p.t_e {
        return Err(Error::TooShort { needed: h_max + 1, got: p.t_e });
    }
    let (d, w) = standardizer(&gamma_hat(p, 0)?)?;
    let m = &w * &d;
    let mt = m.transpose();
    (1..=h_max).map(|h| Ok(&m * gamma_hat(p, h)? * &mt)).collect()
}
