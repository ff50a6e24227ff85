//! Root-location constraints on polynomial coefficients via Jury's
//! determinant criterion.
//!
//! For 1 - c₁z - … - c_r z^r, the outside-unit-circle condition is checked
//! on the reflected polynomial F(z) = z^r·P(1/z) = a₀ + … + a_r z^r with
//! a_r = 1 and a_i = -c_{r-i}. F has all roots inside the unit circle iff
//! F(1) > 0, (-1)^r F(-1) > 0 and, for k = r-1, r-3, … ≥ 1,
//! (-1)^{k(k+1)/2}|X_k - Y_k| > 0 and (-1)^{k(k-1)/2}|X_k + Y_k| > 0, where
//! X_k is upper-triangular Toeplitz in (a₀ … a_{k-1}) and Y_k is the Hankel
//! matrix with Y[i][j] = a_{r-k+1+i+j} above the anti-diagonal.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Constraint, ConstraintSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RootSide {
    /// All roots of the polynomial strictly outside the unit circle.
    Outside,
    /// All roots strictly inside.
    Inside,
}

/// Coefficients a₀..a_r of the polynomial whose roots must lie inside the
/// unit circle, normalized to a_r > 0; `None` when a_r = 0.
fn jury_poly(c: &[f64], side: RootSide) -> Option<Vec<f64>> {
    let r = c.len();
    let a: Vec<f64> = match side {
        RootSide::Outside => (0..r).map(|i| -c[r - 1 - i]).chain(std::iter::once(1.0)).collect(),
        RootSide::Inside => std::iter::once(1.0).chain(c.iter().map(|v| -v)).collect(),
    };
    let lead = a[r];
    if lead == 0.0 {
        return None;
    }
    Some(a.into_iter().map(|v| v * lead.signum()).collect())
}

fn stability_det(a: &[f64], k: usize, plus: bool) -> f64 {
    let r = a.len() - 1;
    let sign = if plus { 1.0 } else { -1.0 };
    let m = DMatrix::from_fn(k, k, |i, j| {
        let x = if j >= i { a[j - i] } else { 0.0 };
        let y = if i + j < k { a[r + 1 + i + j - k] } else { 0.0 };
        x + sign * y
    });
    m.determinant()
}

fn pow_sign(e: usize) -> f64 {
    if e % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Values of the Jury conditions for coefficient vector `c`; all must be
/// positive. The list length depends only on r and the side.
pub fn jury_values(c: &[f64], side: RootSide) -> Vec<f64> {
    let r = c.len();
    if r == 0 {
        return Vec::new();
    }
    let n_det = 2 * (r / 2);
    let extra = usize::from(side == RootSide::Inside);
    let Some(a) = jury_poly(c, side) else {
        let mut v = vec![-1.0; 2 + n_det + extra];
        if extra == 1 {
            v[0] = 0.0;
        }
        return v;
    };
    let mut out = Vec::with_capacity(2 + n_det + extra);
    if side == RootSide::Inside {
        out.push(c[r - 1].abs());
    }
    let at = |z: f64| a.iter().rev().fold(0.0, |acc, v| acc * z + v);
    out.push(at(1.0));
    out.push(pow_sign(r) * at(-1.0));
    let mut k = r - 1;
    while k >= 1 {
        out.push(pow_sign(k * (k + 1) / 2) * stability_det(&a, k, false));
        out.push(pow_sign(k * (k - 1) / 2) * stability_det(&a, k, true));
        if k < 2 {
            break;
        }
        k -= 2;
    }
    out
}

pub fn jury_feasible(c: &[f64], side: RootSide) -> bool {
    jury_values(c, side).iter().all(|&v| v > 0.0)
}

/// Constraint set on a coefficient vector of length r equivalent to the
/// requested root location.
pub fn jury_constraints(r: usize, side: RootSide) -> Result<ConstraintSet> {
    if r < 1 {
        return Err(Error::InvalidArgument("Jury constraints need r >= 1".into()));
    }
    let n = jury_values(&vec![0.0; r], side).len();
    let side_name = match side {
        RootSide::Outside => "outside",
        RootSide::Inside => "inside",
    };
    let items = (0..n)
        .map(|k| {
            let f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> =
                Arc::new(move |c: &[f64]| jury_values(&c[..r], side)[k]);
            Constraint::general(format!("jury[r={r},{side_name}]#{k}"), true, f)
        })
        .collect();
    Ok(ConstraintSet::new(items, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{roots_from_poly, Side};
    use rand::Rng;

    #[test]
    fn ar1_region() {
        let cs = jury_constraints(1, RootSide::Outside).unwrap();
        assert!(cs.is_feasible(&[0.5]));
        assert!(!cs.is_feasible(&[1.5]));
        assert!(!cs.is_feasible(&[-1.5]));
        assert!(jury_constraints(0, RootSide::Outside).is_err());
    }

    #[test]
    fn ar2_triangle() {
        for (c1, c2) in [(0.5f64, 0.2f64), (0.8, 0.4), (-0.3, -0.9), (1.2, -0.3), (0.1, 1.01)] {
            let tri = c2 + c1 < 1.0 && c2 - c1 < 1.0 && c2.abs() < 1.0;
            assert_eq!(jury_feasible(&[c1, c2], RootSide::Outside), tri, "{c1} {c2}");
        }
    }

    /// The four conditions written out for a cubic lag polynomial.
    fn cubic_conditions(p: &[f64]) -> bool {
        let (p1, p2, p3) = (p[0], p[1], p[2]);
        -p3 - p2 - p1 + 1.0 > 0.0 && -p3 + p2 - p1 - 1.0 < 0.0 && p3.abs() < 1.0 && p3 * p3 - 1.0 < p3 * p1 + p2
    }

    #[test]
    fn cubic_matches_written_conditions() {
        let mut rng = crate::rng::rng(3);
        for _ in 0..20_000 {
            let c: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert_eq!(jury_feasible(&c, RootSide::Outside), cubic_conditions(&c), "{c:?}");
        }
    }

    #[test]
    fn agrees_with_roots_up_to_order_six() {
        let mut rng = crate::rng::rng(7);
        for r in 1..=6 {
            let mut checked = 0;
            while checked < 10_000 {
                let scale = [0.5, 1.0, 2.5][rng.random_range(0..3)];
                let c: Vec<f64> = (0..r).map(|_| scale * rng.random_range(-1.5..1.5)).collect();
                let roots = roots_from_poly(&c, Side::Lag).unwrap();
                let m = roots.roots.iter().map(|z| z.norm());
                if m.clone().any(|v| (v - 1.0).abs() < 1e-8) {
                    continue;
                }
                checked += 1;
                let outside = m.clone().all(|v| v < 1.0);
                let inside = m.clone().all(|v| v > 1.0);
                assert_eq!(jury_feasible(&c, RootSide::Outside), outside, "{c:?}");
                assert_eq!(jury_feasible(&c, RootSide::Inside), inside, "{c:?}");
            }
        }
    }
}
