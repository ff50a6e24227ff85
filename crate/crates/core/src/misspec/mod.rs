//! Pseudo-true values: closed-form root-flip bindings for MAR models and
//! simulated finite-sample bindings for any pair of templates.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::fit::fit_model;
use crate::fit::Fitted;
use crate::gcov::{
    default_starts, estimate_i_blocks, estimate_j, from_dmatrix, omega_variants, to_dmatrix, EstimationResult, GcovConfig,
    IBlocks, Matrix, Param, SimMode,
};
use crate::inference::{
    score_s1, score_vector, wald_j_weighted, wald_w1, ScoreScaling, ScoreVariant, ScoreVector, TestResult,
};
use crate::linalg::mean_cov;
use crate::models::{poly_from_roots, roots_from_poly, MarSpec, ModelOrder, Side};
use crate::rng;

const PAIR_TOL: f64 = 1e-8;

/// Which way inverse roots move between the two polynomials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipDirection {
    /// MAR(r,s) to MAR(r-q, s+q).
    LagToLead,
    /// MAR(r,s) to MAR(r+q, s-q).
    LeadToLag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingCandidate {
    pub spec: MarSpec,
    /// Indices of the flipped inverse roots in the source polynomial.
    pub flip_subset: Vec<usize>,
    /// ε_{t+q} = scale · ε'_t for LagToLead flips (ε_{t-q} for LeadToLag).
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingResult {
    pub q: usize,
    pub direction: FlipDirection,
    pub source_roots: Vec<Complex64>,
    pub candidates: Vec<BindingCandidate>,
    /// Subsets rejected because they split a complex-conjugate pair.
    pub skipped: Vec<Vec<usize>>,
}

impl BindingResult {
    pub fn parameter_vectors(&self) -> Vec<Vec<f64>> {
        self.candidates.iter().map(|c| c.spec.theta()).collect()
    }
}

fn subsets(n: usize, q: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, q: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == q {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, q, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, q, &mut Vec::new(), &mut out);
    out
}

/// For each root, the index of its conjugate partner (itself when real).
fn partners(roots: &[Complex64]) -> Vec<usize> {
    let mut p: Vec<usize> = (0..roots.len()).collect();
    let mut used = vec![false; roots.len()];
    for i in 0..roots.len() {
        if used[i] || roots[i].im.abs() <= PAIR_TOL * (1.0 + roots[i].norm()) {
            continue;
        }
        let target = roots[i].conj();
        if let Some(j) = (0..roots.len())
            .filter(|&j| j != i && !used[j])
            .min_by(|&a, &b| (roots[a] - target).norm().total_cmp(&(roots[b] - target).norm()))
        {
            p[i] = j;
            p[j] = i;
            used[i] = true;
            used[j] = true;
        }
    }
    p
}

fn poly_roots(c: &[f64], side: Side) -> Result<Vec<Complex64>> {
    if c.is_empty() {
        return Ok(Vec::new());
    }
    Ok(roots_from_poly(c, side)?.roots)
}

/// All MAR specs reached by moving q inverse roots λ of one polynomial to
/// the other as 1/λ. Feasibility of `spec` is not required.
pub fn flip_roots(spec: &MarSpec, q: usize, direction: FlipDirection) -> Result<BindingResult> {
    let (src, dst) = match direction {
        FlipDirection::LagToLead => (&spec.phi, &spec.psi),
        FlipDirection::LeadToLag => (&spec.psi, &spec.phi),
    };
    if q == 0 || q > src.len() {
        return Err(Error::InvalidArgument(format!("order of misspecification {q} outside 1..={}", src.len())));
    }
    let side = if direction == FlipDirection::LagToLead { Side::Lag } else { Side::Lead };
    let roots = poly_roots(src, side)?;
    let kept_other = poly_roots(dst, if side == Side::Lag { Side::Lead } else { Side::Lag })?;
    if roots.iter().any(|z| z.norm() < 1e-12) {
        return Err(Error::InvalidArgument("a zero inverse root cannot be flipped; the leading coefficient is zero".into()));
    }
    let pair = partners(&roots);
    let mut candidates = Vec::new();
    let mut skipped = Vec::new();
    for sub in subsets(roots.len(), q) {
        if sub.iter().any(|i| !sub.contains(&pair[*i])) {
            skipped.push(sub);
            continue;
        }
        let stay: Vec<Complex64> = (0..roots.len()).filter(|i| !sub.contains(i)).map(|i| roots[i]).collect();
        let mut moved = kept_other.clone();
        moved.extend(sub.iter().map(|&i| 1.0 / roots[i]));
        let scale = sub.iter().fold(Complex64::new(1.0, 0.0), |a, &i| a * -roots[i]).re;
        let (a, b) = (poly_from_roots(&stay)?, poly_from_roots(&moved)?);
        let spec = match direction {
            FlipDirection::LagToLead => MarSpec::new(a, b)?,
            FlipDirection::LeadToLag => MarSpec::new(b, a)?,
        };
        candidates.push(BindingCandidate { spec, flip_subset: sub, scale });
    }
    if candidates.is_empty() {
        return Err(Error::InvalidArgument(format!("every {q}-subset splits a complex-conjugate pair")));
    }
    Ok(BindingResult { q, direction, source_roots: roots, candidates, skipped })
}

/// Pseudo-true values of MAR(r-q, s+q) under MAR(r,s).
pub fn flip_binding(true_spec: &MarSpec, q: usize) -> Result<BindingResult> {
    flip_roots(true_spec, q, FlipDirection::LagToLead)
}

/// Binding of a larger MAR(r2,s2) under a nested MAR(r,s): the true
/// coefficients padded with zeros.
pub fn nested_binding(true_spec: &MarSpec, r2: usize, s2: usize) -> Result<MarSpec> {
    if r2 < true_spec.r() || s2 < true_spec.s() {
        return Err(Error::InvalidArgument(format!(
            "MAR({},{}) is not nested in MAR({r2},{s2})",
            true_spec.r(),
            true_spec.s()
        )));
    }
    let mut phi = true_spec.phi.clone();
    phi.resize(r2, 0.0);
    let mut psi = true_spec.psi.clone();
    psi.resize(s2, 0.0);
    MarSpec::new(phi, psi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingMode {
    /// S samples of length T from resampled residuals.
    Resample,
    /// One sample of length T·S.
    LongPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedBinding {
    pub order: ModelOrder,
    pub b_ts: Vec<f64>,
    #[serde(rename = "S")]
    pub s: usize,
    pub per_rep: Vec<Vec<f64>>,
    /// (1 + 1/S)·T·cov(β̂^s) over the free coordinates (resample mode).
    pub omega_s: Option<Matrix>,
    pub mode: BindingMode,
    pub failed: usize,
}

/// Starts for fitting `m2` to data from the fitted `m1`: the closed-form
/// flip bindings when `m2` is a root flip of `m1`, else the default starts.
pub fn binding_starts(m1: &EstimationResult, m2: ModelOrder, cfg: &GcovConfig, seed: u64) -> Result<Vec<Vec<f64>>> {
    if let (ModelOrder::Mar { r: r1, s: s1 }, ModelOrder::Mar { r: r2, s: s2 }) = (m1.order, m2) {
        if r1 + s1 == r2 + s2 && r2 < r1 {
            let spec = MarSpec::new(m1.theta_hat[..r1].to_vec(), m1.theta_hat[r1..].to_vec())?;
            if let Ok(b) = flip_roots(&spec, r1 - r2, FlipDirection::LagToLead) {
                return Ok(b.parameter_vectors());
            }
        }
        if r1 == r2 && s1 == s2 {
            return Ok(vec![m1.theta_hat.clone()]);
        }
    }
    if m1.order == m2 {
        return Ok(vec![m1.theta_hat.clone()]);
    }
    default_starts(m2, cfg, seed)
}

/// Simulated pseudo-true value b_{T,S}(θ̂) of `m2` under the fitted `m1`.
#[allow(clippy::too_many_arguments)]
pub fn simulated_binding(
    y: &[f64],
    m1: &EstimationResult,
    m2: ModelOrder,
    cfg: &GcovConfig,
    cs2: Option<&ConstraintSet>,
    s: usize,
    seed: u64,
    mode: BindingMode,
) -> Result<SimulatedBinding> {
    let min_s = if mode == BindingMode::Resample { 10 } else { 1 };
    if s < min_s {
        return Err(Error::InvalidArgument(format!("S = {s}: at least {min_s} replications are required")));
    }
    let resid = m1.residuals(y)?;
    if resid.is_empty() {
        return Err(Error::Empty);
    }
    let t = y.len();
    let starts = binding_starts(m1, m2, cfg, rng::child_seed(seed, &[u64::MAX]))?;
    let one = |len: usize, tag: u64| -> Option<Vec<f64>> {
        let mut g = rng::substream(seed, &[tag]);
        let n = m1.order.errors_needed(len);
        let e: Vec<f64> = (0..n).map(|_| resid[rand::Rng::random_range(&mut g, 0..resid.len())]).collect();
        let ys = m1.order.regenerate(&m1.theta_hat, &e, len).ok()?;
        let f = fit_model(&ys, m2, cfg, cs2, &starts, false).ok()?;
        Some(f.theta_hat().to_vec())
    };
    match mode {
        BindingMode::LongPath => {
            let b = one(t * s, 0).ok_or_else(|| Error::Optimization(format!("{m2} could not be fitted to the long path")))?;
            Ok(SimulatedBinding { order: m2, b_ts: b.clone(), s, per_rep: vec![b], omega_s: None, mode, failed: 0 })
        }
        BindingMode::Resample => {
            let reps: Vec<Option<Vec<f64>>> = (0..s).into_par_iter().map(|k| one(t, k as u64)).collect();
            let per_rep: Vec<Vec<f64>> = reps.into_iter().flatten().collect();
            let failed = s - per_rep.len();
            if failed * 10 > s || per_rep.len() < 2 {
                return Err(Error::Replications { failed, total: s });
            }
            let n = per_rep.len() as f64;
            let dim = m2.dim();
            let b_ts: Vec<f64> = (0..dim).map(|j| per_rep.iter().map(|b| b[j]).sum::<f64>() / n).collect();
            let free = Param::new(m2, cfg).free;
            let rows: Vec<Vec<f64>> = per_rep.iter().map(|b| free.iter().map(|&i| b[i]).collect()).collect();
            let (_, cov) = mean_cov(&rows);
            let omega: DMatrix<f64> = cov * ((1.0 + 1.0 / n) * t as f64);
            Ok(SimulatedBinding { order: m2, b_ts, s: per_rep.len(), per_rep, omega_s: Some(from_dmatrix(&omega)), mode, failed })
        }
    }
}

/// Nested Wald test of MAR(r1,s1) against a larger MAR(r2,s2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedWald {
    pub null_fit: Fitted,
    pub alt_fit: Fitted,
    /// b(θ̂): the null estimate padded with zeros.
    pub binding: Vec<f64>,
    /// Hessian of the larger model's L_T at b(θ̂).
    pub j22: Matrix,
    /// Hessian of the larger model's L_T at β̂.
    pub j22_at_beta: Matrix,
    pub omega_a: Matrix,
    /// T·dᵀΩ_A⁺d
    pub w1: TestResult,
    /// T·dᵀJ22 d with J22 taken at β̂, where it is PSD; at b(θ̂) it is
    /// indefinite under the alternative.
    pub j_weighted: TestResult,
    /// Gradient of the larger model's L_T at b(θ̂).
    pub score: ScoreVector,
    pub i_blocks: IBlocks,
    /// S1 under `NestedWaldOptions::scaling`; `None` when the score
    /// variance is numerically indefinite.
    pub s1: Option<TestResult>,
}

pub struct NestedWaldOptions<'a> {
    pub cs_null: Option<&'a ConstraintSet>,
    pub cs_alt: Option<&'a ConstraintSet>,
    /// Replications used to simulate the I blocks.
    pub replications: usize,
    pub seed: u64,
    pub level: f64,
    pub scaling: ScoreScaling,
}

/// Fits both models, binds the null estimate into the larger model and
/// computes the W1 and J22-weighted statistics on d = β̂ - b(θ̂).
pub fn nested_wald(
    y: &[f64],
    null: ModelOrder,
    alt: ModelOrder,
    cfg: &GcovConfig,
    opts: &NestedWaldOptions,
) -> Result<NestedWald> {
    let (ModelOrder::Mar { r: r1, .. }, ModelOrder::Mar { r: r2, s: s2 }) = (null, alt) else {
        return Err(Error::InvalidArgument("nested Wald needs two MAR templates".into()));
    };
    let starts1 = default_starts(null, cfg, rng::child_seed(opts.seed, &[1]))?;
    let null_fit = fit_model(y, null, cfg, opts.cs_null, &starts1, false)?;
    let th = null_fit.theta_hat();
    let spec = nested_binding(&MarSpec::new(th[..r1].to_vec(), th[r1..].to_vec())?, r2, s2)?;
    let binding = spec.theta();
    let mut starts2 = vec![binding.clone()];
    starts2.extend(default_starts(alt, cfg, rng::child_seed(opts.seed, &[2]))?);
    let alt_fit = fit_model(y, alt, cfg, opts.cs_alt, &starts2, false)?;

    let j22 = estimate_j(y, alt, &binding, cfg)?;
    let mut at_b = alt_fit.estimate().clone();
    at_b.theta_hat = binding.clone();
    let ib = estimate_i_blocks(
        y,
        null_fit.estimate(),
        &at_b,
        cfg,
        opts.replications,
        rng::child_seed(opts.seed, &[3]),
        &SimMode::Resample,
    )?;
    let omega_a = to_dmatrix(&omega_variants(&j22, &ib)?.omega_a);
    let t = y.len();
    let beta = alt_fit.theta_hat().to_vec();
    let w1 = wald_w1(&beta, &binding, &omega_a, t, opts.level)?;
    let j_beta = estimate_j(y, alt, &beta, cfg)?;
    let j_weighted = wald_j_weighted(&beta, &binding, &j_beta, t, opts.level)?;
    let score = score_vector(y, alt, &binding, cfg, ScoreVariant::AsymptoticB)?;
    let s1 = score_s1(&score, &ib, t, opts.scaling, opts.level).ok();
    Ok(NestedWald {
        null_fit,
        alt_fit,
        binding,
        j22: from_dmatrix(&j22),
        j22_at_beta: from_dmatrix(&j_beta),
        omega_a: from_dmatrix(&omega_a),
        w1,
        j_weighted,
        score,
        i_blocks: ib,
        s1,
    })
}

#[cfg(test)]
mod tests;
