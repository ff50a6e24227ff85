//! Conversions between lag-polynomial coefficients and inverse roots.
//!
//! A coefficient list `c` stands for the polynomial 1 - c₁z - … - c_k z^k.
//! Its inverse roots ρ_j satisfy 1 - c₁z - … - c_k z^k = Π_j (1 - ρ_j z), so
//! |ρ_j| < 1 exactly when the corresponding root lies outside the unit
//! circle.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which polynomial a root set was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lag,
    Lead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    /// Inverse roots ρ_j.
    pub roots: Vec<Complex64>,
    pub side: Side,
}

impl RootSet {
    /// Moduli of the inverse roots, sorted descending.
    pub fn moduli(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.roots.iter().map(|r| r.norm()).collect();
        m.sort_by(|a, b| b.total_cmp(a));
        m
    }

    /// Moduli of the polynomial roots themselves (1/|ρ|), sorted ascending.
    pub fn root_moduli(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.roots.iter().map(|r| 1.0 / r.norm()).collect();
        m.sort_by(|a, b| a.total_cmp(b));
        m
    }

    /// True when every polynomial root lies outside the unit circle by at
    /// least `margin` in inverse-root modulus.
    pub fn all_outside(&self, margin: f64) -> bool {
        self.roots.iter().all(|r| r.norm() < 1.0 - margin)
    }
}

const REAL_SNAP: f64 = 1e-12;
const PAIR_TOL: f64 = 1e-8;
const IMAG_TRUNC: f64 = 1e-10;

/// Check that non-real entries come in conjugate pairs.
fn conjugate_pairs_ok(roots: &[Complex64]) -> bool {
    let mut used = vec![false; roots.len()];
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        let z = roots[i];
        if z.im.abs() <= PAIR_TOL * (1.0 + z.norm()) {
            used[i] = true;
            continue;
        }
        let target = z.conj();
        let partner = (0..roots.len())
            .filter(|&j| j != i && !used[j])
            .min_by(|&a, &b| (roots[a] - target).norm().total_cmp(&(roots[b] - target).norm()));
        match partner {
            Some(j) if (roots[j] - target).norm() <= PAIR_TOL * (1.0 + z.norm()) => {
                used[i] = true;
                used[j] = true;
            }
            _ => return false,
        }
    }
    true
}

/// Real coefficients c with 1 - Σ c_i z^i = Π (1 - ρ_j z).
pub fn poly_from_roots(inverse_roots: &[Complex64]) -> Result<Vec<f64>> {
    if !conjugate_pairs_ok(inverse_roots) {
        return Err(Error::InvalidArgument(
            "complex inverse roots must occur in conjugate pairs".into(),
        ));
    }
    // p holds the coefficients of Π(1 - ρ z) in ascending powers.
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for &rho in inverse_roots {
        let mut next = vec![Complex64::new(0.0, 0.0); p.len() + 1];
        for (i, &a) in p.iter().enumerate() {
            next[i] += a;
            next[i + 1] -= a * rho;
        }
        p = next;
    }
    p.iter()
        .skip(1)
        .map(|a| {
            if a.im.abs() > IMAG_TRUNC * (1.0 + a.re.abs()) {
                Err(Error::InvalidArgument(format!(
                    "coefficient has imaginary residue {}",
                    a.im
                )))
            } else {
                Ok(-a.re)
            }
        })
        .collect()
}

/// Inverse roots of 1 - c₁z - … - c_k z^k, multiplicity preserved.
///
/// Computed as the zeros of the monic reversed polynomial
/// z^k - c₁z^{k-1} - … - c_k with Aberth–Ehrlich iteration followed by a
/// Newton polish and conjugate symmetrization.
pub fn roots_from_poly(coeffs: &[f64], side: Side) -> Result<RootSet> {
    if coeffs.is_empty() {
        return Err(Error::InvalidArgument("empty coefficient list".into()));
    }
    if coeffs.iter().all(|c| *c == 0.0) {
        return Err(Error::InvalidArgument("all coefficients are zero".into()));
    }
    if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    // Descending coefficients of the monic polynomial.
    let mut monic = Vec::with_capacity(coeffs.len() + 1);
    monic.push(1.0);
    monic.extend(coeffs.iter().map(|c| -c));
    let roots = monic_roots(&monic);
    Ok(RootSet { roots, side })
}

fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(coeffs[0], 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in &coeffs[1..] {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

fn monic_roots(desc: &[f64]) -> Vec<Complex64> {
    let n = desc.len() - 1;
    // Exact zero roots from trailing zero coefficients.
    let zeros = desc.iter().rev().take_while(|a| **a == 0.0).count();
    let trimmed = &desc[..desc.len() - zeros];
    let m = trimmed.len() - 1;
    let mut roots = Vec::with_capacity(n);
    if m == 1 {
        roots.push(Complex64::new(-trimmed[1], 0.0));
    } else if m > 1 {
        roots.extend(aberth(trimmed));
    }
    roots.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), zeros));
    symmetrize(&mut roots);
    roots
}

fn aberth(desc: &[f64]) -> Vec<Complex64> {
    let n = desc.len() - 1;
    // Start on a circle whose radius matches the geometric mean of the roots.
    let radius = desc[n].abs().powf(1.0 / n as f64).max(
        desc[1..].iter().map(|a| a.abs()).fold(0.0, f64::max) / n as f64,
    );
    let radius = if radius > 0.0 { radius } else { 1.0 };
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
            Complex64::from_polar(radius, angle)
        })
        .collect();
    for _ in 0..1000 {
        let mut max_step: f64 = 0.0;
        for i in 0..n {
            let (p, dp) = horner(desc, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = z[i] - z[j];
                    if d.norm() == 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        1.0 / d
                    }
                })
                .sum();
            let step = ratio / (1.0 - ratio * repulsion);
            if step.is_finite() {
                z[i] -= step;
                max_step = max_step.max(step.norm() / (1.0 + z[i].norm()));
            }
        }
        if max_step < 1e-16 {
            break;
        }
    }
    // Newton polish.
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner(desc, *zi);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            if !step.is_finite() || step.norm() > 1e-6 * (1.0 + zi.norm()) {
                break;
            }
            *zi -= step;
        }
    }
    z
}

/// Snap near-real roots to the real axis and force exact conjugate pairs.
fn symmetrize(roots: &mut [Complex64]) {
    for z in roots.iter_mut() {
        if z.im.abs() <= REAL_SNAP * (1.0 + z.norm()) {
            z.im = 0.0;
        }
    }
    let n = roots.len();
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] || roots[i].im == 0.0 {
            continue;
        }
        let target = roots[i].conj();
        let j = (0..n)
            .filter(|&j| j != i && !done[j] && roots[j].im != 0.0)
            .min_by(|&a, &b| (roots[a] - target).norm().total_cmp(&(roots[b] - target).norm()));
        if let Some(j) = j {
            let avg = (roots[i] + roots[j].conj()) * 0.5;
            roots[i] = avg;
            roots[j] = avg.conj();
            done[i] = true;
            done[j] = true;
        }
    }
}
