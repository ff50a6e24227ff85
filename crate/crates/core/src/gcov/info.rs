//! Information matrices: J as the Hessian of L_T, I-blocks by simulation,
//! and the sandwich variances built from them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{from_dmatrix, to_dmatrix, EstimationResult, GcovConfig, Matrix, Objective, Param};
use crate::error::{Error, Result};
use crate::linalg::{inverse_checked, symmetrize};
use crate::models::{ErrorDist, ModelOrder};
use crate::optim;
use crate::rng;

/// Condition number beyond which J22 or I11 count as singular.
pub const MAX_COND: f64 = 1e12;

/// Symmetrized finite-difference Hessian of L_T at θ over the free
/// coordinates.
pub fn estimate_j(y: &[f64], order: ModelOrder, theta: &[f64], cfg: &GcovConfig) -> Result<DMatrix<f64>> {
    let obj = Objective::new(y, order, cfg)?;
    let param = Param::new(order, cfg);
    let f = |z: &[f64]| obj.value(&param.embed(z)).unwrap_or(f64::NAN);
    let h = optim::hessian(&f, &param.project(theta))?;
    let n = h.len();
    Ok(symmetrize(&DMatrix::from_fn(n, n, |i, j| h[i][j])))
}

/// How synthetic samples are drawn from a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SimMode {
    /// Errors resampled i.i.d. from the fitted residuals.
    Resample,
    /// Errors drawn from a known law.
    Parametric { dist: ErrorDist },
}

/// Draw errors for one synthetic sample of length `t` under `order`.
pub(crate) fn draw_sim_errors<R: Rng + ?Sized>(
    mode: &SimMode,
    residuals: &[f64],
    order: ModelOrder,
    t: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = order.errors_needed(t);
    match mode {
        SimMode::Resample => {
            if residuals.is_empty() {
                return Err(Error::Empty);
            }
            Ok((0..n).map(|_| residuals[rng.random_range(0..residuals.len())]).collect())
        }
        SimMode::Parametric { dist } => Ok(dist.sample_n(rng, n)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IBlocks {
    pub i11: Matrix,
    pub i12: Matrix,
    pub i21: Matrix,
    pub i22: Matrix,
    /// I22 from gradients centered at their replication mean.
    pub i22_star: Matrix,
    pub replications: usize,
    pub dropped: usize,
}

fn outer_mean(a: &[DVector<f64>], b: &[DVector<f64>], scale: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a[0].len(), b[0].len());
    for (x, z) in a.iter().zip(b) {
        m += x * z.transpose();
    }
    m * (scale / a.len() as f64)
}

/// Simulate `r` samples under the fitted true model `m1` and average
/// T·g gᵀ over the gradients of both objectives at (θ̂, β̂).
pub fn estimate_i_blocks(
    y: &[f64],
    m1: &EstimationResult,
    m2: &EstimationResult,
    cfg: &GcovConfig,
    r: usize,
    seed: u64,
    mode: &SimMode,
) -> Result<IBlocks> {
    if r < 2 {
        return Err(Error::InvalidArgument("at least two replications are required".into()));
    }
    let t = y.len();
    let resid = m1.residuals(y)?;
    let (p1, p2) = (Param::new(m1.order, cfg), Param::new(m2.order, cfg));
    let (z1, z2) = (p1.project(&m1.theta_hat), p2.project(&m2.theta_hat));
    let grads: Vec<Option<(DVector<f64>, DVector<f64>)>> = (0..r)
        .into_par_iter()
        .map(|k| {
            let mut g = rng::substream(seed, &[k as u64]);
            let e = draw_sim_errors(mode, &resid, m1.order, t, &mut g).ok()?;
            let ys = m1.order.regenerate(&m1.theta_hat, &e, t).ok()?;
            let o1 = Objective::new(&ys, m1.order, cfg).ok()?;
            let o2 = Objective::new(&ys, m2.order, cfg).ok()?;
            let g1 = optim::gradient(&|z: &[f64]| o1.value_or_inf(&p1.embed(z)), &z1).ok()?;
            let g2 = optim::gradient(&|z: &[f64]| o2.value_or_inf(&p2.embed(z)), &z2).ok()?;
            Some((DVector::from_vec(g1), DVector::from_vec(g2)))
        })
        .collect();
    let ok: Vec<_> = grads.into_iter().flatten().collect();
    let dropped = r - ok.len();
    if dropped * 10 > r || ok.len() < 2 {
        return Err(Error::Replications { failed: dropped, total: r });
    }
    let (g1, g2): (Vec<_>, Vec<_>) = ok.into_iter().unzip();
    let tf = t as f64;
    let n = g2.len() as f64;
    let mean2 = g2.iter().fold(DVector::zeros(g2[0].len()), |a, g| a + g) / n;
    let c2: Vec<DVector<f64>> = g2.iter().map(|g| g - &mean2).collect();
    Ok(IBlocks {
        i11: from_dmatrix(&symmetrize(&outer_mean(&g1, &g1, tf))),
        i12: from_dmatrix(&outer_mean(&g1, &g2, tf)),
        i21: from_dmatrix(&outer_mean(&g2, &g1, tf)),
        i22: from_dmatrix(&symmetrize(&outer_mean(&g2, &g2, tf))),
        i22_star: from_dmatrix(&symmetrize(&outer_mean(&c2, &c2, tf))),
        replications: g1.len(),
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaVariants {
    /// J22⁻¹ I22 J22⁻¹
    pub omega_22: Matrix,
    /// J22⁻¹ [I22 - I21 I11⁻¹ I12] J22⁻¹
    pub omega_a: Matrix,
    /// J22⁻¹ [I22* - I21 I11⁻¹ I12] J22⁻¹
    pub omega_f: Matrix,
}

/// I22 - I21 I11⁻¹ I12, or the I22* variant.
pub fn schur_complement(ib: &IBlocks, star: bool) -> Result<DMatrix<f64>> {
    let i11 = inverse_checked(&to_dmatrix(&ib.i11), MAX_COND, "I11")?;
    let i22 = to_dmatrix(if star { &ib.i22_star } else { &ib.i22 });
    Ok(symmetrize(&(i22 - to_dmatrix(&ib.i21) * i11 * to_dmatrix(&ib.i12))))
}

pub fn omega_variants(j22: &DMatrix<f64>, ib: &IBlocks) -> Result<OmegaVariants> {
    let ji = inverse_checked(j22, MAX_COND, "J22")?;
    let sw = |m: DMatrix<f64>| from_dmatrix(&symmetrize(&(&ji * m * &ji)));
    Ok(OmegaVariants {
        omega_22: sw(to_dmatrix(&ib.i22)),
        omega_a: sw(schur_complement(ib, false)?),
        omega_f: sw(schur_complement(ib, true)?),
    })
}

/// Attach I (simulated under the fitted model), Ω = J⁻¹IJ⁻¹ and standard
/// errors √(diag Ω / T) to an estimate.
pub fn sandwich(
    res: &EstimationResult,
    y: &[f64],
    cfg: &GcovConfig,
    r: usize,
    seed: u64,
    mode: &SimMode,
) -> Result<EstimationResult> {
    let j = match &res.j {
        Some(j) => to_dmatrix(j),
        None => estimate_j(y, res.order, &res.theta_hat, cfg)?,
    };
    let ib = estimate_i_blocks(y, res, res, cfg, r, seed, mode)?;
    let ji = inverse_checked(&j, MAX_COND, "J")?;
    let i = to_dmatrix(&ib.i11);
    let omega = symmetrize(&(&ji * &i * &ji));
    let t = y.len() as f64;
    let mut out = res.clone();
    out.se = Some(omega.diagonal().iter().map(|v| (v.max(0.0) / t).sqrt()).collect());
    out.j = Some(from_dmatrix(&j));
    out.i = Some(from_dmatrix(&i));
    out.omega = Some(from_dmatrix(&omega));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcov::{apply_transforms, default_starts, gamma_hat, gcov_estimate, TransformSet};
    use crate::linalg::min_eigenvalue;
    use crate::models::{mar_simulate, MarSpec};
    use proptest::prelude::*;

    /// Closed-form first-order condition of L_T for a causal AR(1) with power
    /// transforms: ∂L = Σ_h Tr[W_h G⁻¹Γ_h'G⁻¹] with
    /// W_h = 2∂Γ_h - Γ_h G⁻¹∂G - ∂G G⁻¹Γ_h.
    fn ar1_foc(y: &[f64], phi: f64, ts: &TransformSet, hmax: usize) -> f64 {
        let u: Vec<f64> = (1..y.len()).map(|t| y[t] - phi * y[t - 1]).collect();
        let du: Vec<f64> = (1..y.len()).map(|t| -y[t - 1]).collect();
        let p = apply_transforms(&u, ts).unwrap();
        let dcols: Vec<Vec<f64>> = ts
            .as_slice()
            .iter()
            .map(|tr| {
                let d = match tr {
                    crate::gcov::Transform::Power(k) => *k as f64,
                    _ => unreachable!(),
                };
                let k = d as i32;
                let c: Vec<f64> = u.iter().zip(&du).map(|(x, dx)| d * x.powi(k - 1) * dx).collect();
                let m = c.iter().sum::<f64>() / c.len() as f64;
                c.into_iter().map(|v| v - m).collect()
            })
            .collect();
        let n = u.len();
        let kk = ts.k();
        let dgamma = |h: usize| {
            DMatrix::from_fn(kk, kk, |i, j| {
                (h..n).map(|t| dcols[i][t] * p.column(j)[t - h] + p.column(i)[t] * dcols[j][t - h]).sum::<f64>()
                    / n as f64
            })
        };
        let g0 = gamma_hat(&p, 0).unwrap();
        let gi = g0.clone().try_inverse().unwrap();
        let dg0 = dgamma(0);
        (1..=hmax)
            .map(|h| {
                let gh = gamma_hat(&p, h).unwrap();
                let w = dgamma(h) * 2.0 - &gh * &gi * &dg0 - &dg0 * &gi * &gh;
                (w * &gi * gh.transpose() * &gi).trace()
            })
            .sum()
    }

    fn ar1_data(seed: u64) -> Vec<f64> {
        let m = MarSpec::new(vec![0.5], vec![]).unwrap();
        mar_simulate(&m, &ErrorDist::student_t(5.0), 1000, seed, 200).unwrap().0.into_values()
    }

    #[test]
    fn j_matches_differentiated_foc() {
        let y = ar1_data(4);
        let cfg = GcovConfig::new(3, TransformSet::powers(2));
        let o = ModelOrder::mar(1, 0);
        let ys = crate::timeseries::Series::from_vec(y.clone()).unwrap();
        let res = gcov_estimate(&ys, o, &cfg, &default_starts(o, &cfg, 0).unwrap()).unwrap();
        let phi = res.theta_hat[0];
        assert!(ar1_foc(&y, phi, &cfg.transforms, 3).abs() < 1e-4);
        let f = |x: f64| Objective::new(&y, o, &cfg).unwrap().value(&[x]).unwrap();
        let g_num = (f(phi + 0.01 + 1e-6) - f(phi + 0.01 - 1e-6)) / 2e-6;
        assert!((g_num - ar1_foc(&y, phi + 0.01, &cfg.transforms, 3)).abs() < 1e-6 * g_num.abs().max(1.0));
        let h = 1e-4;
        let oracle = (ar1_foc(&y, phi + h, &cfg.transforms, 3) - ar1_foc(&y, phi - h, &cfg.transforms, 3)) / (2.0 * h);
        let j = estimate_j(&y, o, &[phi], &cfg).unwrap()[(0, 0)];
        assert!(((j - oracle) / oracle).abs() < 1e-3, "{j} vs {oracle}");
        assert!(j > 0.0);
    }

    #[test]
    fn identical_models_give_identical_blocks() {
        let y = ar1_data(6);
        let cfg = GcovConfig::new(3, TransformSet::powers(2)).with_starts(3);
        let o = ModelOrder::mar(1, 0);
        let ys = crate::timeseries::Series::from_vec(y.clone()).unwrap();
        let res = gcov_estimate(&ys, o, &cfg, &default_starts(o, &cfg, 0).unwrap()).unwrap();
        let ib = estimate_i_blocks(&y, &res, &res, &cfg, 60, 1, &SimMode::Resample).unwrap();
        let (a, b) = (to_dmatrix(&ib.i11), to_dmatrix(&ib.i12));
        assert!((a - b).norm() < 1e-12);
        assert!(to_dmatrix(&ib.i22_star)[(0, 0)] <= to_dmatrix(&ib.i22)[(0, 0)] + 1e-12);
        assert!(min_eigenvalue(&to_dmatrix(&ib.i11)) >= -1e-8);
        let sw = sandwich(&res, &y, &cfg, 60, 1, &SimMode::Resample).unwrap();
        let se = sw.se.unwrap()[0];
        assert!(se > 0.005 && se < 0.1, "{se}");
    }

    #[test]
    fn omega_collapse_cases() {
        let ib = IBlocks {
            i11: vec![vec![1.0]],
            i12: vec![vec![0.0]],
            i21: vec![vec![0.0]],
            i22: vec![vec![8.0]],
            i22_star: vec![vec![8.0]],
            replications: 0,
            dropped: 0,
        };
        let o = omega_variants(&DMatrix::from_element(1, 1, 2.0), &ib).unwrap();
        assert_eq!(o.omega_22, vec![vec![2.0]]);
        assert_eq!(o.omega_a, o.omega_22);
        assert!(omega_variants(&DMatrix::zeros(1, 1), &ib).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn omega_a_psd_when_schur_psd(a in prop::collection::vec(-1f64..1.0, 16), j in prop::collection::vec(-1f64..1.0, 4)) {
            let m = DMatrix::from_row_slice(4, 4, &a);
            let full = &m * m.transpose() + DMatrix::identity(4, 4) * 0.1;
            let blk = |r: usize, c: usize| from_dmatrix(&full.view((r, c), (2, 2)).into_owned());
            let ib = IBlocks { i11: blk(0, 0), i12: blk(0, 2), i21: blk(2, 0), i22: blk(2, 2), i22_star: blk(2, 2), replications: 0, dropped: 0 };
            let jm = DMatrix::from_row_slice(2, 2, &j);
            let j22 = &jm * jm.transpose() + DMatrix::identity(2, 2) * 0.5;
            let s = schur_complement(&ib, false).unwrap();
            prop_assert!(min_eigenvalue(&s) >= -1e-10);
            let o = omega_variants(&j22, &ib).unwrap();
            prop_assert!(min_eigenvalue(&to_dmatrix(&o.omega_a)) >= -1e-10);
        }
    }
}
