//! Mixed causal–noncausal autoregressions Φ(L)Ψ(L⁻¹)y_t = ε_t.

use rand::Rng;

use super::{ErrorDist, MarSpec};
use crate::error::{Error, Result};
use crate::rng;
use crate::timeseries::Series;

/// ε_t = Φ(L)Ψ(L⁻¹)y_t on the interior points t = r+1..T-s.
pub fn mar_residuals(y: &Series, m: &MarSpec) -> Result<Series> {
    let e = mar_residuals_raw(y.values(), &m.phi, &m.psi)?;
    Series::with_origin(e, "residuals", y.t0_index + m.r() as i64)
}

pub(crate) fn mar_residuals_raw(y: &[f64], phi: &[f64], psi: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    mar_residuals_into(y, phi, psi, &mut out)?;
    Ok(out)
}

pub(crate) fn mar_residuals_into(y: &[f64], phi: &[f64], psi: &[f64], out: &mut Vec<f64>) -> Result<()> {
    let (r, s) = (phi.len(), psi.len());
    let n = y.len();
    if n < r + s + 1 {
        return Err(Error::TooShort { needed: r + s + 1, got: n });
    }
    // u_t = Ψ(L⁻¹)y_t for t < n - s, then ε_t = Φ(L)u_t for t ≥ r.
    let m = n - s;
    let u: Vec<f64> = (0..m)
        .map(|t| {
            let mut v = y[t];
            for (j, c) in psi.iter().enumerate() {
                v -= c * y[t + j + 1];
            }
            v
        })
        .collect();
    out.clear();
    out.extend((r..m).map(|t| {
        let mut v = u[t];
        for (i, c) in phi.iter().enumerate() {
            v -= c * u[t - i - 1];
        }
        v
    }));
    Ok(())
}

/// Invert the MAR filter for a given error sequence of length T + 2·burn:
/// u = Ψ(L⁻¹)⁻¹ε by backward recursion from the end, y = Φ(L)⁻¹u by forward
/// recursion from the start, keeping the central T points.
pub(crate) fn mar_filter(phi: &[f64], psi: &[f64], errors: &[f64], burn: usize) -> Result<Vec<f64>> {
    let n = errors.len();
    if n <= 2 * burn {
        return Err(Error::InvalidArgument("error sequence shorter than burn-in".into()));
    }
    let mut u = vec![0.0; n];
    for t in (0..n).rev() {
        let mut v = errors[t];
        for (j, c) in psi.iter().enumerate() {
            if t + j + 1 < n {
                v += c * u[t + j + 1];
            }
        }
        u[t] = v;
    }
    let mut y = vec![0.0; n];
    for t in 0..n {
        let mut v = u[t];
        for (i, c) in phi.iter().enumerate() {
            if t > i {
                v += c * y[t - i - 1];
            }
        }
        y[t] = v;
    }
    Ok(y[burn..n - burn].to_vec())
}

/// Simulate T observations and the aligned true errors.
pub fn mar_simulate(m: &MarSpec, dist: &ErrorDist, t: usize, seed: u64, burn: usize) -> Result<(Series, Series)> {
    if !m.is_feasible() {
        return Err(Error::Infeasible(format!(
            "MAR({},{}) has roots on or inside the unit circle",
            m.r(),
            m.s()
        )));
    }
    mar_simulate_unchecked(m, dist, t, seed, burn)
}

/// As [`mar_simulate`] without the root-location check (explosive
/// specifications are simulated as written).
pub fn mar_simulate_unchecked(
    m: &MarSpec,
    dist: &ErrorDist,
    t: usize,
    seed: u64,
    burn: usize,
) -> Result<(Series, Series)> {
    let mut r = rng::rng(seed);
    mar_simulate_with(m, dist, t, &mut r, burn)
}

pub(crate) fn mar_simulate_with<R: Rng + ?Sized>(
    m: &MarSpec,
    dist: &ErrorDist,
    t: usize,
    rng: &mut R,
    burn: usize,
) -> Result<(Series, Series)> {
    if t == 0 {
        return Err(Error::InvalidArgument("series length must be positive".into()));
    }
    let eps = dist.sample_n(rng, t + 2 * burn);
    let y = mar_filter(&m.phi, &m.psi, &eps, burn)?;
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok((
        Series::new(y, "y")?,
        Series::new(eps[burn..burn + t].to_vec(), "errors")?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::acf;
    use proptest::prelude::*;

    fn s(v: &[f64]) -> Series {
        Series::from_vec(v.to_vec()).unwrap()
    }

    #[test]
    fn identity_filter_on_interior() {
        let y = s(&[3.0, -1.0, 4.0, 1.0, -5.0]);
        let m = MarSpec::new(vec![0.0], vec![0.0]).unwrap();
        assert_eq!(mar_residuals(&y, &m).unwrap().values(), &[-1.0, 4.0, 1.0]);
    }

    #[test]
    fn causal_unit_coefficient_differences() {
        let m = MarSpec::new(vec![1.0], vec![]).unwrap();
        let e = mar_residuals(&s(&[1.0, 2.0, 3.0, 4.0]), &m).unwrap();
        assert_eq!(e.values(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn mar11_formula() {
        let (phi, psi) = (0.4, -0.3);
        let y = [0.5, 1.5, -2.0, 0.25, 3.0];
        let m = MarSpec::new(vec![phi], vec![psi]).unwrap();
        let e = mar_residuals(&s(&y), &m).unwrap();
        for (k, t) in (1..4).enumerate() {
            let want = (y[t] - phi * y[t - 1]) - psi * (y[t + 1] - phi * y[t]);
            assert!((e.values()[k] - want).abs() < 1e-14);
        }
        assert!(mar_residuals(&s(&[1.0, 2.0]), &m).is_err());
    }

    #[test]
    fn ar1_autocorrelation() {
        let m = MarSpec::new(vec![0.5], vec![]).unwrap();
        let (y, _) = mar_simulate(&m, &ErrorDist::gaussian(), 20_000, 1, 200).unwrap();
        let r = acf(&y, 1).unwrap();
        assert!((r[0] - 0.5).abs() < 0.05, "{r:?}");
    }

    #[test]
    fn pure_noncausal_is_time_reversed_ar1() {
        let m = MarSpec::new(vec![], vec![0.3]).unwrap();
        let (y, _) = mar_simulate(&m, &ErrorDist::gaussian(), 20_000, 2, 200).unwrap();
        let mut rev = y.values().to_vec();
        rev.reverse();
        let r = acf(&Series::from_vec(rev).unwrap(), 2).unwrap();
        assert!((r[0] - 0.3).abs() < 0.05 && (r[1] - 0.09).abs() < 0.05, "{r:?}");
    }

    #[test]
    fn infeasible_rejected_unless_unchecked() {
        let m = MarSpec::new(vec![0.8, 0.4], vec![]).unwrap();
        assert!(matches!(
            mar_simulate(&m, &ErrorDist::student_t(5.0), 100, 1, 50),
            Err(Error::Infeasible(_))
        ));
        assert!(mar_simulate_unchecked(&m, &ErrorDist::student_t(5.0), 100, 1, 20).is_ok());
        let ok = MarSpec::new(vec![0.5], vec![]).unwrap();
        assert!(mar_simulate(&ok, &ErrorDist::gaussian(), 0, 1, 10).is_err());
    }

    #[test]
    fn determinism() {
        let m = MarSpec::new(vec![0.3], vec![0.8]).unwrap();
        let a = mar_simulate(&m, &ErrorDist::student_t(5.0), 300, 7, 200).unwrap();
        let b = mar_simulate(&m, &ErrorDist::student_t(5.0), 300, 7, 200).unwrap();
        assert_eq!(a, b);
    }

    fn spec_strategy() -> impl Strategy<Value = MarSpec> {
        (
            prop::collection::vec(-0.9f64..0.9, 0..3),
            prop::collection::vec(-0.9f64..0.9, 0..3),
        )
            .prop_filter_map("feasible", |(lr, ld)| {
                let phi = crate::models::poly_from_roots(
                    &lr.iter().map(|&x| num_complex::Complex64::new(x, 0.0)).collect::<Vec<_>>(),
                )
                .ok()?;
                let psi = crate::models::poly_from_roots(
                    &ld.iter().map(|&x| num_complex::Complex64::new(x, 0.0)).collect::<Vec<_>>(),
                )
                .ok()?;
                MarSpec::new(phi, psi).ok()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn simulation_round_trip(m in spec_strategy(), seed in any::<u64>()) {
            let (y, eps) = mar_simulate(&m, &ErrorDist::student_t(5.0), 300, seed, 200).unwrap();
            let e = mar_residuals(&y, &m).unwrap();
            let truth = &eps.values()[m.r()..300 - m.s()];
            let scale = truth.iter().fold(1.0f64, |a, x| a.max(x.abs()));
            for (a, b) in e.values().iter().zip(truth) {
                prop_assert!((a - b).abs() <= 1e-6 * scale);
            }
        }

        #[test]
        fn residuals_equivariant(m in spec_strategy(), v in prop::collection::vec(-10f64..10.0, 8..30), k in -3i32..4) {
            let c = 2f64.powi(k);
            let y = Series::from_vec(v.clone()).unwrap();
            let yc = Series::from_vec(v.iter().map(|x| c * x).collect()).unwrap();
            let a = mar_residuals(&y, &m).unwrap();
            let b = mar_residuals(&yc, &m).unwrap();
            for (x, z) in a.values().iter().zip(b.values()) {
                prop_assert_eq!(c * x, *z);
            }
        }
    }
}
