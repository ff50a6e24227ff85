//! Specification and model-selection tests.

pub mod chisq;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::fit::{fit_model, Fitted};
use crate::gcov::{schur_complement, IBlocks};
use crate::gcov::{apply_transforms, data_starts, trace_objective, GcovConfig, Objective, Param, TransformSet};
use crate::linalg::{pinv_sym, rank, symmetrize, PINV_RTOL};
use crate::models::ModelOrder;
use crate::optim;
use crate::rng;

pub use chisq::{chi_square_cdf, chi_square_quantile, chi_square_sf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    ChiSquare,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub dof: Option<usize>,
    pub critical_value: f64,
    pub p_value: f64,
    pub method: TestMethod,
    #[serde(rename = "B")]
    pub b: Option<usize>,
    pub level: f64,
    pub reject: bool,
    pub warnings: Vec<String>,
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("significance level {level} outside (0, 1)")))
    }
}

/// χ² decision for a nonnegative statistic.
pub fn chi_square_test(statistic: f64, dof: usize, level: f64) -> Result<TestResult> {
    check_level(level)?;
    if dof == 0 {
        return Err(Error::InvalidArgument("chi-square test needs positive degrees of freedom".into()));
    }
    if !statistic.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite test statistic {statistic}")));
    }
    let statistic = statistic.max(0.0);
    let critical_value = chi_square_quantile(1.0 - level, dof)?;
    Ok(TestResult {
        statistic,
        dof: Some(dof),
        critical_value,
        p_value: chi_square_sf(statistic, dof as f64).clamp(0.0, 1.0),
        method: TestMethod::ChiSquare,
        b: None,
        level,
        reject: statistic > critical_value,
        warnings: Vec::new(),
    })
}

/// Bootstrap decision: critical value is the ⌈(1-level)(B+1)⌉-th order
/// statistic of the draws, p = (1 + #{draw ≥ statistic}) / (B + 1).
pub fn bootstrap_test(statistic: f64, draws: &[f64], level: f64) -> Result<TestResult> {
    check_level(level)?;
    if draws.is_empty() {
        return Err(Error::Empty);
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    let k = (((1.0 - level) * (b + 1) as f64).ceil() as usize).clamp(1, b);
    let exceed = sorted.iter().filter(|&&d| d >= statistic).count();
    let p_value = (1 + exceed) as f64 / (b + 1) as f64;
    Ok(TestResult {
        statistic,
        dof: None,
        critical_value: sorted[k - 1],
        p_value,
        method: TestMethod::Bootstrap,
        b: Some(b),
        level,
        reject: p_value <= level,
        warnings: Vec::new(),
    })
}

/// Portmanteau dof H·K² - dim θ. A pinned DAR scale still counts.
pub fn portmanteau_dof(h: usize, k: usize, order: ModelOrder) -> Result<usize> {
    let m = h * k * k;
    if m <= order.dim() {
        return Err(Error::InvalidArgument(format!("H·K² = {m} leaves no degrees of freedom for {order}")));
    }
    Ok(m - order.dim())
}

fn portmanteau_statistic(y: &[f64], order: ModelOrder, theta: &[f64], cfg: &GcovConfig) -> Result<f64> {
    let obj = Objective::new(y, order, cfg)?;
    Ok(obj.t_eff() as f64 * obj.value(theta)?)
}

/// ξ̂ = T·L_T(θ̂) against χ²(H·K² - dim θ).
pub fn portmanteau_test(y: &[f64], fitted: &Fitted, cfg: &GcovConfig, level: f64) -> Result<TestResult> {
    let est = fitted.estimate();
    let dof = portmanteau_dof(cfg.h, cfg.k(), est.order)?;
    let stat = portmanteau_statistic(y, est.order, &est.theta_hat, cfg)?;
    let mut res = chi_square_test(stat, dof, level)?;
    if fitted.on_boundary() {
        res.warnings.push(
            "estimate lies on the constraint boundary: the statistic is not asymptotically chi-square, \
             use bootstrap critical values"
                .into(),
        );
    }
    Ok(res)
}

/// Serial dependence test on the transformed raw series.
pub fn nlsd_test(y: &[f64], transforms: &TransformSet, h: usize, level: f64) -> Result<TestResult> {
    if h == 0 {
        return Err(Error::InvalidArgument("H must be at least 1".into()));
    }
    if y.len() <= h + 1 {
        return Err(Error::TooShort { needed: h + 2, got: y.len() });
    }
    let panel = apply_transforms(y, transforms)?;
    let stat = y.len() as f64 * trace_objective(&panel, h)?;
    chi_square_test(stat, h * transforms.k() * transforms.k(), level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    pub test: TestResult,
    pub fitted: Fitted,
    /// Statistics of the successful resamples, in resample order.
    pub draws: Vec<f64>,
    pub failed: usize,
}

/// Fit `order` on `y` (CGCov when `cs` is given) and compare ξ̂ with the
/// distribution of ξ̂ over B residual-bootstrap samples.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_portmanteau(
    y: &[f64],
    order: ModelOrder,
    cfg: &GcovConfig,
    cs: Option<&ConstraintSet>,
    b: usize,
    seed: u64,
    level: f64,
) -> Result<BootstrapOutcome> {
    let starts = data_starts(y, order, cfg, rng::child_seed(seed, &[u64::MAX]))?;
    let fitted = fit_model(y, order, cfg, cs, &starts, false)?;
    bootstrap_fitted(y, fitted, cfg, cs, b, seed, level)
}

/// Bootstrap portmanteau for an existing fit. Each resample is refitted
/// from θ̂ with the same estimator.
pub fn bootstrap_fitted(
    y: &[f64],
    fitted: Fitted,
    cfg: &GcovConfig,
    cs: Option<&ConstraintSet>,
    b: usize,
    seed: u64,
    level: f64,
) -> Result<BootstrapOutcome> {
    check_level(level)?;
    if b < 99 {
        return Err(Error::InvalidArgument(format!("B = {b}: at least 99 resamples are required")));
    }
    let est = fitted.estimate();
    let order = est.order;
    let theta = est.theta_hat.clone();
    let stat = portmanteau_statistic(y, order, &theta, cfg)?;
    let resid = est.residuals(y)?;
    let t = y.len();
    let draws: Vec<Option<f64>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::substream(seed, &[i as u64]);
            let n = order.errors_needed(t);
            let e: Vec<f64> = (0..n).map(|_| resid[rand::Rng::random_range(&mut g, 0..resid.len())]).collect();
            let ys = order.regenerate(&theta, &e, t).ok()?;
            let f = fit_model(&ys, order, cfg, cs, std::slice::from_ref(&theta), false).ok()?;
            let s = portmanteau_statistic(&ys, order, f.theta_hat(), cfg).ok()?;
            s.is_finite().then_some(s)
        })
        .collect();
    let ok: Vec<f64> = draws.iter().flatten().copied().collect();
    let failed = b - ok.len();
    if failed * 10 > b {
        return Err(Error::Replications { failed, total: b });
    }
    let mut test = bootstrap_test(stat, &ok, level)?;
    if failed > 0 {
        test.warnings.push(format!("{failed} of {b} resamples failed to estimate and were dropped"));
    }
    Ok(BootstrapOutcome { test, fitted, draws: ok, failed })
}

fn check_dims(beta_hat: &[f64], b: &[f64], m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if beta_hat.len() != b.len() || m.nrows() != b.len() || m.ncols() != b.len() {
        return Err(Error::Dimension(format!(
            "β̂ has {}, b has {}, weight matrix is {}x{}",
            beta_hat.len(),
            b.len(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(DVector::from_iterator(b.len(), beta_hat.iter().zip(b).map(|(x, y)| x - y)))
}

/// T·dᵀΩ⁺d with d = β̂ - b and dof = rank Ω under a singular-value cutoff
/// of `rtol` relative to the largest.
pub fn wald_with_rtol(
    beta_hat: &[f64],
    b: &[f64],
    omega: &DMatrix<f64>,
    t: usize,
    level: f64,
    rtol: f64,
) -> Result<TestResult> {
    let d = check_dims(beta_hat, b, omega)?;
    let (inv, r) = pinv_sym(omega, rtol);
    if r == 0 {
        return Err(Error::Singular("Ω has no singular value above the rank tolerance".into()));
    }
    let mut res = chi_square_test(t as f64 * (d.transpose() * inv * &d)[0], r, level)?;
    if r < b.len() {
        res.warnings.push(format!("Ω has rank {r} of {}; generalized inverse used", b.len()));
    }
    Ok(res)
}

/// W1: Ω_A built from I22 - I21 I11⁻¹ I12 around the asymptotic binding b(θ̂).
pub fn wald_w1(beta_hat: &[f64], b_of_theta_hat: &[f64], omega_a: &DMatrix<f64>, t: usize, level: f64) -> Result<TestResult> {
    wald_with_rtol(beta_hat, b_of_theta_hat, omega_a, t, level, PINV_RTOL)
}

/// W2: Ω_F around the finite-sample binding b_T(θ̂).
pub fn wald_w2(beta_hat: &[f64], b_t: &[f64], omega_f: &DMatrix<f64>, t: usize, level: f64) -> Result<TestResult> {
    wald_with_rtol(beta_hat, b_t, omega_f, t, level, PINV_RTOL)
}

/// W3: Ω_S around the simulated binding b_{T,S}(θ̂).
pub fn wald_w3(beta_hat: &[f64], b_ts: &[f64], omega_s: &DMatrix<f64>, t: usize, level: f64) -> Result<TestResult> {
    wald_with_rtol(beta_hat, b_ts, omega_s, t, level, PINV_RTOL)
}

/// Nested-case Wald form with J22 as the middle matrix: T·dᵀJ22 d with
/// dof = rank J22.
pub fn wald_j_weighted(beta_hat: &[f64], b: &[f64], j22: &DMatrix<f64>, t: usize, level: f64) -> Result<TestResult> {
    let d = check_dims(beta_hat, b, j22)?;
    let r = rank(j22, PINV_RTOL);
    if r == 0 {
        return Err(Error::Singular("J22 is zero".into()));
    }
    let j = symmetrize(j22);
    let q = t as f64 * (d.transpose() * &j * &d)[0];
    let mut res = chi_square_test(q, r, level)?;
    if crate::linalg::min_eigenvalue(&j) < 0.0 {
        res.warnings.push(format!("J22 is indefinite; quadratic form {q:.4e} clamped at zero"));
    }
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreVariant {
    /// Gradient at the asymptotic binding b(θ̂).
    AsymptoticB,
    /// Gradient at the finite-sample binding b_T(θ̂).
    FiniteSampleB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub lambda: Vec<f64>,
    pub variant: ScoreVariant,
}

/// Gradient of the second model's L_T on `y` at `b`, over its free
/// coordinates.
pub fn score_vector(
    y: &[f64],
    order2: ModelOrder,
    b: &[f64],
    cfg: &GcovConfig,
    variant: ScoreVariant,
) -> Result<ScoreVector> {
    if b.len() != order2.dim() {
        return Err(Error::Dimension(format!("b has {} entries, {order2} has {}", b.len(), order2.dim())));
    }
    let obj = Objective::new(y, order2, cfg)?;
    let param = Param::new(order2, cfg);
    let lambda = optim::gradient(&|z: &[f64]| obj.value_or_inf(&param.embed(z)), &param.project(b))?;
    if lambda.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("score vector has non-finite entries".into()));
    }
    Ok(ScoreVector { lambda, variant })
}

/// Prefactor of the score quadratic form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreScaling {
    /// (1/T)·λᵀV⁺λ
    AsPrinted,
    /// T·λᵀV⁺λ, the scaling under which √T·λ has variance V. Under the
    /// nested null this gives chi-square sizes; the 1/T form never rejects.
    #[default]
    SampleSize,
}

impl ScoreScaling {
    pub fn factor(self, t: usize) -> f64 {
        match self {
            ScoreScaling::AsPrinted => 1.0 / t as f64,
            ScoreScaling::SampleSize => t as f64,
        }
    }
}

fn score_test(lambda: &ScoreVector, v: DMatrix<f64>, t: usize, scaling: ScoreScaling, level: f64) -> Result<TestResult> {
    if v.nrows() != lambda.lambda.len() {
        return Err(Error::Dimension(format!("λ has {} entries, variance is {}x{}", lambda.lambda.len(), v.nrows(), v.ncols())));
    }
    let eig = v.clone().symmetric_eigen().eigenvalues;
    let top = eig.iter().fold(0.0_f64, |a, e| a.max(e.abs()));
    let low = eig.iter().fold(f64::INFINITY, |a, &e| a.min(e));
    if low < -1e-8 * top.max(1.0) {
        return Err(Error::InvalidArgument(format!("score variance is indefinite (eigenvalue {low:.3e})")));
    }
    let (inv, r) = pinv_sym(&v, PINV_RTOL);
    if r == 0 {
        return Err(Error::Singular("score variance is zero".into()));
    }
    let l = DVector::from_column_slice(&lambda.lambda);
    let mut res = chi_square_test(scaling.factor(t) * (l.transpose() * inv * &l)[0], r, level)?;
    if scaling == ScoreScaling::AsPrinted {
        res.warnings.push("score statistic uses the 1/T prefactor".into());
    }
    Ok(res)
}

/// S1 with variance I22 - I21 I11⁻¹ I12.
pub fn score_s1(lambda1: &ScoreVector, ib: &IBlocks, t: usize, scaling: ScoreScaling, level: f64) -> Result<TestResult> {
    score_test(lambda1, schur_complement(ib, false)?, t, scaling, level)
}

/// S2 with variance I22* - I21 I11⁻¹ I12.
pub fn score_s2(lambda2: &ScoreVector, ib: &IBlocks, t: usize, scaling: ScoreScaling, level: f64) -> Result<TestResult> {
    score_test(lambda2, schur_complement(ib, true)?, t, scaling, level)
}
