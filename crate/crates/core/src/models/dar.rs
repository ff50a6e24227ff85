//! Double autoregressions y_t = Σφ_i y_{t-i} + η_t √(ω + Σα_j y²_{t-j}).

use rand::Rng;

use super::{DarSpec, ErrorDist};
use crate::error::{Error, Result};
use crate::rng;
use crate::timeseries::Series;

/// η̂_t for t = max(p,q)+1..T.
pub fn dar_residuals(y: &Series, d: &DarSpec) -> Result<Series> {
    let e = dar_residuals_raw(y.values(), &d.phi, d.omega, &d.alpha)?;
    Series::with_origin(e, "residuals", y.t0_index + d.max_lag() as i64)
}

pub(crate) fn dar_residuals_raw(y: &[f64], phi: &[f64], omega: f64, alpha: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    dar_residuals_into(y, phi, omega, alpha, &mut out)?;
    Ok(out)
}

pub(crate) fn dar_residuals_into(
    y: &[f64],
    phi: &[f64],
    omega: f64,
    alpha: &[f64],
    out: &mut Vec<f64>,
) -> Result<()> {
    let m = phi.len().max(alpha.len());
    if y.len() <= m {
        return Err(Error::TooShort { needed: m + 1, got: y.len() });
    }
    out.clear();
    for t in m..y.len() {
        let mut num = y[t];
        for (i, c) in phi.iter().enumerate() {
            num -= c * y[t - i - 1];
        }
        let mut var = omega;
        for (j, a) in alpha.iter().enumerate() {
            let lag = y[t - j - 1];
            var += a * lag * lag;
        }
        if !(var > 0.0) {
            return Err(Error::ResidualMap {
                index: t,
                reason: format!("conditional variance {var} is not positive"),
            });
        }
        out.push(num / var.sqrt());
    }
    Ok(())
}

/// Forward recursion from zero pre-sample values; keeps the last
/// `errors.len() - burn` points.
pub(crate) fn dar_filter(phi: &[f64], omega: f64, alpha: &[f64], errors: &[f64], burn: usize) -> Result<Vec<f64>> {
    let n = errors.len();
    if n <= burn {
        return Err(Error::InvalidArgument("error sequence shorter than burn-in".into()));
    }
    let mut y = vec![0.0; n];
    for t in 0..n {
        let mut mean = 0.0;
        for (i, c) in phi.iter().enumerate() {
            if t > i {
                mean += c * y[t - i - 1];
            }
        }
        let mut var = omega;
        for (j, a) in alpha.iter().enumerate() {
            if t > j {
                var += a * y[t - j - 1] * y[t - j - 1];
            }
        }
        if !(var > 0.0) {
            return Err(Error::ResidualMap {
                index: t,
                reason: format!("conditional variance {var} is not positive"),
            });
        }
        y[t] = mean + errors[t] * var.sqrt();
        if !y[t].is_finite() {
            return Err(Error::NonFinite(t));
        }
    }
    Ok(y[burn..].to_vec())
}

/// Simulate T observations and the aligned true errors.
pub fn dar_simulate(d: &DarSpec, dist: &ErrorDist, t: usize, seed: u64, burn: usize) -> Result<(Series, Series)> {
    let mut r = rng::rng(seed);
    dar_simulate_with(d, dist, t, &mut r, burn)
}

pub(crate) fn dar_simulate_with<R: Rng + ?Sized>(
    d: &DarSpec,
    dist: &ErrorDist,
    t: usize,
    rng: &mut R,
    burn: usize,
) -> Result<(Series, Series)> {
    if t == 0 {
        return Err(Error::InvalidArgument("series length must be positive".into()));
    }
    let eta = dist.sample_n(rng, t + burn);
    let y = dar_filter(&d.phi, d.omega, &d.alpha, &eta, burn)?;
    Ok((Series::new(y, "y")?, Series::new(eta[burn..].to_vec(), "errors")?))
}

/// Monte Carlo estimate of E log|φ + η√α| for a DAR(1), with η drawn by
/// resampling `residuals`. Negative values indicate a strictly stationary
/// solution. Returns `None` for models other than DAR(1).
pub fn dar_stationarity_diagnostic(d: &DarSpec, residuals: &[f64], draws: usize, seed: u64) -> Option<f64> {
    if d.p() > 1 || d.q() > 1 || residuals.is_empty() || draws == 0 {
        return None;
    }
    let phi = d.phi.first().copied().unwrap_or(0.0);
    let sa = d.alpha.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    let mut r = rng::rng(seed);
    let total: f64 = (0..draws)
        .map(|_| {
            let eta = residuals[r.random_range(0..residuals.len())];
            (phi + eta * sa).abs().max(f64::MIN_POSITIVE).ln()
        })
        .sum();
    Some(total / draws as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[f64]) -> Series {
        Series::from_vec(v.to_vec()).unwrap()
    }

    #[test]
    fn scaled_ar_residual_when_alpha_zero() {
        let d = DarSpec::new(vec![0.5], 1.0, vec![0.0]).unwrap();
        assert_eq!(dar_residuals(&s(&[0.0, 1.0, 2.0]), &d).unwrap().values(), &[1.0, 1.5]);
    }

    #[test]
    fn hand_evaluation() {
        let d = DarSpec::new(vec![0.0], 1.0, vec![3.0]).unwrap();
        assert_eq!(dar_residuals(&s(&[0.0, 2.0]), &d).unwrap().values(), &[2.0]);
        assert!(dar_residuals(&s(&[1.0]), &d).is_err());
    }

    #[test]
    fn nonpositive_variance_reported() {
        assert!(matches!(
            dar_residuals_raw(&[0.0, 1.0], &[0.0], -1.0, &[0.0]),
            Err(Error::ResidualMap { .. })
        ));
    }

    #[test]
    fn white_noise_case() {
        let d = DarSpec::new(vec![0.0], 1.0, vec![0.0]).unwrap();
        let (y, _) = dar_simulate(&d, &ErrorDist::gaussian(), 50_000, 3, 500).unwrap();
        let m = y.mean();
        let var = y.values().iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len() as f64;
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn example_dar21_round_trip_and_determinism() {
        let d = DarSpec::new(vec![0.4, 0.2], 1.0, vec![0.4]).unwrap();
        let (y, eta) = dar_simulate(&d, &ErrorDist::student_t(5.0), 1000, 8, 500).unwrap();
        assert!(y.values().iter().all(|v| v.is_finite()));
        let e = dar_residuals(&y, &d).unwrap();
        for (a, b) in e.values().iter().zip(&eta.values()[2..]) {
            assert!((a - b).abs() < 1e-10);
        }
        let again = dar_simulate(&d, &ErrorDist::student_t(5.0), 1000, 8, 500).unwrap();
        assert_eq!(again.0, y);
        assert!(dar_simulate(&d, &ErrorDist::gaussian(), 0, 1, 10).is_err());
    }

    #[test]
    fn stationarity_diagnostic_sign() {
        let d = DarSpec::new(vec![0.5], 1.0, vec![0.4]).unwrap();
        let eta = crate::models::draw_errors(&ErrorDist::student_t(5.0), 5000, 1).unwrap();
        let v = dar_stationarity_diagnostic(&d, eta.values(), 100_000, 2).unwrap();
        assert!(v < 0.0, "{v}");
        let explosive = DarSpec::new(vec![1.5], 1.0, vec![0.4]).unwrap();
        assert!(dar_stationarity_diagnostic(&explosive, eta.values(), 100_000, 2).unwrap() > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn simulation_round_trip(phi in prop::collection::vec(-0.4f64..0.4, 0..3),
                                 alpha in prop::collection::vec(0.0f64..0.3, 0..3),
                                 omega in 0.1f64..2.0, seed in any::<u64>()) {
            prop_assume!(!phi.is_empty() || !alpha.is_empty());
            let d = DarSpec::new(phi, omega, alpha).unwrap();
            let (y, eta) = dar_simulate(&d, &ErrorDist::student_t(5.0), 400, seed, 500).unwrap();
            let e = dar_residuals(&y, &d).unwrap();
            for (a, b) in e.values().iter().zip(&eta.values()[d.max_lag()..]) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
