use super::*;
use crate::gcov::{gcov_estimate, TransformSet};
use crate::models::ErrorDist;
use proptest::prelude::*;
use rand::Rng;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

#[test]
fn closed_form_examples() {
    let c1 = flip_binding(&MarSpec::new(vec![0.8, 0.4], vec![]).unwrap(), 2).unwrap();
    assert_eq!(c1.candidates.len(), 1);
    assert!(close(&c1.candidates[0].spec.psi, &[-0.8 / 0.4, 1.0 / 0.4], 1e-12));
    assert!((c1.candidates[0].scale - (-0.4)).abs() < 1e-12);

    let c2 = flip_binding(&MarSpec::new(vec![0.3], vec![0.8]).unwrap(), 1).unwrap();
    let b = &c2.candidates[0].spec;
    assert!(b.phi.is_empty());
    assert!(close(&b.psi, &[0.8 + 1.0 / 0.3, -0.8 / 0.3], 1e-12));
    assert!((b.psi[0] - 4.133_333_3).abs() < 1e-6 && (b.psi[1] + 2.666_666_7).abs() < 1e-6);

    let three = flip_binding(&MarSpec::new(poly_from_roots(&[0.5.into(), (-0.3).into(), 0.7.into()]).unwrap(), vec![]).unwrap(), 2).unwrap();
    assert_eq!(three.candidates.len(), 3);
    assert!(flip_binding(&MarSpec::new(vec![0.5], vec![]).unwrap(), 2).is_err());
}

#[test]
fn conjugate_pairs_are_not_split() {
    let z = Complex64::new(0.3, 0.4);
    let spec = MarSpec::new(poly_from_roots(&[z, z.conj(), 0.5.into()]).unwrap(), vec![0.2]).unwrap();
    let one = flip_binding(&spec, 1).unwrap();
    assert_eq!(one.candidates.len(), 1);
    assert_eq!(one.skipped.len(), 2);
    let two = flip_binding(&spec, 2).unwrap();
    assert_eq!(two.candidates.len() + two.skipped.len(), 3);
    assert_eq!(two.candidates.len(), 1);
    assert!((two.candidates[0].scale - z.norm_sqr()).abs() < 1e-12);
    let pair_only = MarSpec::new(poly_from_roots(&[z, z.conj()]).unwrap(), vec![]).unwrap();
    assert!(flip_binding(&pair_only, 1).is_err());
}

#[test]
fn nested_pads_with_zeros() {
    let m = nested_binding(&MarSpec::new(vec![], vec![0.5]).unwrap(), 0, 2).unwrap();
    assert_eq!(m.theta(), vec![0.5, 0.0]);
    assert!(nested_binding(&MarSpec::new(vec![0.1], vec![]).unwrap(), 0, 2).is_err());
}

fn random_feasible(r: usize, s: usize, seed: u64) -> MarSpec {
    let mut g = rng::rng(seed);
    let mut draw = |n: usize| {
        let mut roots = Vec::new();
        while roots.len() < n {
            if n - roots.len() >= 2 && g.random_bool(0.4) {
                let z = Complex64::from_polar(g.random_range(0.1..0.9), g.random_range(0.2..2.9));
                roots.push(z);
                roots.push(z.conj());
            } else {
                let m: f64 = g.random_range(0.1..0.9);
                roots.push((if g.random_bool(0.5) { m } else { -m }).into());
            }
        }
        poly_from_roots(&roots).unwrap()
    };
    MarSpec::new(draw(r), draw(s)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn flip_is_an_involution(r in 1usize..=3, s in 0usize..=3, seed in any::<u64>()) {
        let spec = random_feasible(r, s, seed);
        for q in 1..=r {
            let Ok(fwd) = flip_binding(&spec, q) else { continue };
            for c in &fwd.candidates {
                let back = flip_roots(&c.spec, q, FlipDirection::LeadToLag).unwrap();
                prop_assert!(back.candidates.iter().any(|b| close(&b.spec.theta(), &spec.theta(), 1e-10)));
            }
        }
    }

    #[test]
    fn flipped_filter_rescales_the_residuals(r in 1usize..=3, s in 0usize..=2, seed in any::<u64>()) {
        let spec = random_feasible(r, s, seed);
        let mut g = rng::rng(seed ^ 1);
        let y: Vec<f64> = (0..60).map(|_| g.random_range(-1.0..1.0)).collect();
        let u = ModelOrder::mar(r, s).residuals(&y, &spec.theta()).unwrap();
        for q in 1..=r {
            let Ok(fwd) = flip_binding(&spec, q) else { continue };
            for c in &fwd.candidates {
                let v = ModelOrder::mar(r - q, s + q).residuals(&y, &c.spec.theta()).unwrap();
                prop_assert_eq!(u.len(), v.len());
                for (a, b) in u.iter().zip(&v) {
                    prop_assert!((a - c.scale * b).abs() < 1e-10 * (1.0 + a.abs()));
                }
            }
        }
    }
}

fn fitted(order: ModelOrder, theta: &[f64], t: usize, seed: u64, cfg: &GcovConfig) -> (Vec<f64>, EstimationResult) {
    let spec = order.spec(theta).unwrap();
    let (y, _) = spec.simulate(&ErrorDist::student_t(5.0), t, seed).unwrap();
    let res = gcov_estimate(&y, order, cfg, &[theta.to_vec()]).unwrap();
    (y.values().to_vec(), res)
}

#[test]
fn self_binding_recovers_the_estimate() {
    let cfg = GcovConfig::new(3, TransformSet::powers(2));
    let (y, m1) = fitted(ModelOrder::mar(1, 0), &[0.6], 500, 4, &cfg);
    let sb = simulated_binding(&y, &m1, m1.order, &cfg, None, 20, 7, BindingMode::Resample).unwrap();
    let sd = (to_sd(&sb.per_rep, 0)) / (sb.s as f64).sqrt();
    assert!((sb.b_ts[0] - m1.theta_hat[0]).abs() < 3.0 * sd, "{} vs {} (sd {sd})", sb.b_ts[0], m1.theta_hat[0]);
    let mean = sb.per_rep.iter().map(|b| b[0]).sum::<f64>() / sb.s as f64;
    assert_eq!(mean, sb.b_ts[0]);
    let again = simulated_binding(&y, &m1, m1.order, &cfg, None, 20, 7, BindingMode::Resample).unwrap();
    assert_eq!(again, sb);
    assert!(simulated_binding(&y, &m1, m1.order, &cfg, None, 5, 7, BindingMode::Resample).is_err());
}

fn to_sd(rows: &[Vec<f64>], j: usize) -> f64 {
    let n = rows.len() as f64;
    let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
    (rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[test]
fn mar11_binding_under_mar02() {
    let cfg = GcovConfig::new(3, TransformSet::powers(2));
    let (y, m1) = fitted(ModelOrder::mar(1, 1), &[0.3, 0.8], 1000, 21, &cfg);
    let closed = flip_binding(&MarSpec::new(vec![m1.theta_hat[0]], vec![m1.theta_hat[1]]).unwrap(), 1).unwrap();
    let target = closed.candidates[0].spec.theta();
    let sb = simulated_binding(&y, &m1, ModelOrder::mar(0, 2), &cfg, None, 50, 3, BindingMode::Resample).unwrap();
    assert!(close(&sb.b_ts, &target, 0.2), "{:?} vs {target:?}", sb.b_ts);
    let om = sb.omega_s.unwrap();
    assert!(om[0][0] > 0.0 && om[1][1] > 0.0);

    let long = simulated_binding(&y, &m1, ModelOrder::mar(0, 2), &cfg, None, 20, 3, BindingMode::LongPath).unwrap();
    let short = simulated_binding(&y, &m1, ModelOrder::mar(0, 2), &cfg, None, 20, 5, BindingMode::Resample).unwrap();
    for j in 0..2 {
        let se = (2.0 * to_sd(&short.per_rep, j).powi(2) / 20.0).sqrt();
        assert!((long.b_ts[j] - short.b_ts[j]).abs() < 2.0 * se,
            "coordinate {j}: {} vs {} (se {se})", long.b_ts[j], short.b_ts[j]);
    }
}
