//! Constrained GCov by quadratic exterior penalties over an increasing
//! ladder, with exact clamping of active lower bounds.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ConstraintSet;
use crate::error::{Error, Result};
use crate::gcov::{estimate_j, from_dmatrix, neutral_start, EstimationResult, GcovConfig, Objective, Param};
use crate::models::ModelOrder;
use crate::optim::{self, Minimum};
use crate::timeseries::Series;

pub const PENALTY_LADDER: [f64; 4] = [1e2, 1e4, 1e6, 1e8];

/// |q(θ̂)| at or below this counts as active.
pub const ACTIVE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderStep {
    pub mu: f64,
    /// L_T without the penalty term.
    pub objective: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CGcovResult {
    #[serde(flatten)]
    pub estimate: EstimationResult,
    pub active_set: Vec<usize>,
    pub active_labels: Vec<String>,
    /// Multipliers γ ≥ 0 of the Lagrangian L_T - γ'q over the active set.
    pub kt_multipliers: Option<Vec<f64>>,
    pub boundary_flag: bool,
    pub max_violation: f64,
    /// Penalty path of the selected start.
    pub ladder: Vec<LadderStep>,
    /// Norm of ∇L_T - D'γ at θ̂.
    pub kkt_residual: Option<f64>,
}

struct StartOutcome {
    theta: Vec<f64>,
    f: f64,
    ladder: Vec<LadderStep>,
}

/// Move an infeasible start into the feasible set: clamp lower bounds, then
/// shrink toward `interior` geometrically.
fn repair(theta: &[f64], cs: &ConstraintSet, interior: &[f64]) -> Vec<f64> {
    let mut th = theta.to_vec();
    for c in &cs.items {
        if let Some((i, b)) = c.as_lower_bound() {
            th[i] = th[i].max(b);
        }
    }
    if cs.is_feasible(&th) {
        return th;
    }
    let mut t = 1.0;
    for _ in 0..80 {
        t *= 0.9;
        let cand: Vec<f64> = interior.iter().zip(&th).map(|(a, b)| a + t * (b - a)).collect();
        if cs.is_feasible(&cand) {
            return cand;
        }
    }
    interior.to_vec()
}

/// Largest step toward `target` from the feasible `anchor` that stays
/// feasible.
fn bisect_feasible(anchor: &[f64], target: &[f64], cs: &ConstraintSet) -> Vec<f64> {
    let at = |t: f64| -> Vec<f64> { anchor.iter().zip(target).map(|(a, b)| a + t * (b - a)).collect() };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if cs.is_feasible(&at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

fn run_start(
    obj: &Objective<'_>,
    param: &Param,
    cs: &ConstraintSet,
    start: &[f64],
    cfg: &GcovConfig,
) -> Option<StartOutcome> {
    let raw = |th: &[f64]| obj.value_or_inf(th);
    let anchor = start.to_vec();
    let mut z = param.project(start);
    let mut ladder = Vec::new();
    let mut mu_last = PENALTY_LADDER[0];
    for &mu in &PENALTY_LADDER {
        mu_last = mu;
        let f = |z: &[f64]| {
            let th = param.embed(z);
            raw(&th) + mu * cs.penalty(&th)
        };
        let m: Minimum = optim::minimize(&f, &z, &cfg.optim);
        if !m.f.is_finite() {
            return None;
        }
        z = m.x;
        let th = param.embed(&z);
        let v = cs.max_violation(&th);
        ladder.push(LadderStep { mu, objective: raw(&th), max_violation: v });
        if v == 0.0 {
            break;
        }
    }
    let mut th = param.embed(&z);
    // Pin violated lower bounds on the bound and re-polish the rest.
    let mut pinned: Vec<(usize, f64)> = Vec::new();
    for c in &cs.items {
        if let Some((i, b)) = c.as_lower_bound() {
            if th[i] < b && param.free.contains(&i) {
                pinned.push((i, b));
            }
        }
    }
    if !pinned.is_empty() {
        let rest: Vec<usize> =
            (0..param.free.len()).filter(|&k| !pinned.iter().any(|&(i, _)| i == param.free[k])).collect();
        let base = th.clone();
        let build = |w: &[f64]| {
            let mut t = base.clone();
            for &(i, b) in &pinned {
                t[i] = b;
            }
            for (&k, &v) in rest.iter().zip(w) {
                t[param.free[k]] = v;
            }
            t
        };
        let w0: Vec<f64> = rest.iter().map(|&k| th[param.free[k]]).collect();
        th = if w0.is_empty() {
            build(&[])
        } else {
            let f = |w: &[f64]| {
                let t = build(w);
                raw(&t) + mu_last * cs.penalty(&t)
            };
            build(&optim::minimize(&f, &w0, &cfg.optim).x)
        };
    }
    if !cs.is_feasible(&th) {
        th = bisect_feasible(&anchor, &th, cs);
    }
    let f = raw(&th);
    f.is_finite().then_some(StartOutcome { theta: th, f, ladder })
}

/// Constrained GCov from the supplied starts. Infeasible starts are repaired
/// toward `interior` (default: the neutral start of the model family).
pub fn cgcov_estimate(
    y: &Series,
    order: ModelOrder,
    cfg: &GcovConfig,
    cs: &ConstraintSet,
    init: &[Vec<f64>],
    interior: Option<&[f64]>,
) -> Result<CGcovResult> {
    cgcov_estimate_raw(y.values(), order, cfg, cs, init, interior, true)
}

pub(crate) fn cgcov_estimate_raw(
    y: &[f64],
    order: ModelOrder,
    cfg: &GcovConfig,
    cs: &ConstraintSet,
    init: &[Vec<f64>],
    interior: Option<&[f64]>,
    with_j: bool,
) -> Result<CGcovResult> {
    if cs.dim() != order.dim() {
        return Err(Error::Dimension(format!("constraints act on {} parameters, {order} has {}", cs.dim(), order.dim())));
    }
    if init.is_empty() {
        return Err(Error::InvalidArgument("no start vectors supplied".into()));
    }
    let obj = Objective::new(y, order, cfg)?;
    let param = Param::new(order, cfg);
    let interior = param.normalize(&interior.map(<[f64]>::to_vec).unwrap_or_else(|| neutral_start(order)));
    if !cs.is_feasible(&interior) {
        return Err(Error::Infeasible("interior point violates the constraints; no feasible start".into()));
    }
    let starts: Vec<Vec<f64>> = init
        .iter()
        .map(|s| {
            if s.len() != order.dim() {
                Err(Error::Dimension(format!("start of length {} for {order}", s.len())))
            } else {
                Ok(repair(&param.normalize(s), cs, &interior))
            }
        })
        .collect::<Result<_>>()?;
    let outcomes: Vec<Option<StartOutcome>> =
        starts.par_iter().map(|s| run_start(&obj, &param, cs, s, cfg)).collect();
    let mins: Vec<Minimum> = outcomes
        .iter()
        .map(|o| Minimum {
            x: Vec::new(),
            f: o.as_ref().map_or(f64::INFINITY, |o| o.f),
            grad_norm: f64::NAN,
            converged: false,
            iterations: 0,
        })
        .collect();
    let best = optim::pick_best(&mins)
        .ok_or_else(|| Error::Optimization(format!("no start produced a finite constrained fit for {order}")))?;
    let out = outcomes[best].as_ref().expect("best start has an outcome");
    let theta = out.theta.clone();
    let max_violation = cs.max_violation(&theta);
    if max_violation > 1e-8 {
        return Err(Error::Optimization(format!("penalty ladder ended with violation {max_violation:.3e}")));
    }
    let values = cs.values(&theta);
    let active_set: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(i, v)| {
            v.abs() <= ACTIVE_TOL && cs.items[*i].as_lower_bound().is_none_or(|(k, _)| param.free.contains(&k))
        })
        .map(|(i, _)| i)
        .collect();
    let f = |z: &[f64]| obj.value_or_inf(&param.embed(z));
    let z = param.project(&theta);
    let grad = optim::gradient(&f, &z).ok();
    let grad_norm = grad.as_ref().map_or(f64::NAN, |g| g.iter().map(|v| v * v).sum::<f64>().sqrt());
    let j = if with_j { Some(from_dmatrix(&estimate_j(y, order, &theta, cfg)?)) } else { None };
    let estimate = EstimationResult {
        order,
        param_names: order.param_names(),
        free: param.free.clone(),
        objective: out.f,
        t_eff: obj.t_eff(),
        converged: grad_norm < cfg.optim.gtol * (1.0 + out.f.abs()),
        grad_norm,
        n_starts_used: init.len(),
        best_start: best,
        start_objectives: mins.iter().map(|m| m.f).collect(),
        h: cfg.h,
        transforms: cfg.transforms.clone(),
        theta_hat: theta,
        j,
        i: None,
        omega: None,
        se: None,
    };
    let mut res = CGcovResult {
        active_labels: active_set.iter().map(|&i| cs.items[i].label.clone()).collect(),
        boundary_flag: !active_set.is_empty(),
        active_set,
        kt_multipliers: None,
        max_violation,
        ladder: out.ladder.clone(),
        kkt_residual: None,
        estimate,
    };
    if res.boundary_flag {
        if let Ok((gamma, resid)) = multipliers(&res, cs, &obj, &param) {
            res.kt_multipliers = Some(gamma);
            res.kkt_residual = Some(resid);
            res.estimate.converged = resid < 1e-4 * (1.0 + out.f.abs());
        }
    }
    Ok(res)
}

fn multipliers(res: &CGcovResult, cs: &ConstraintSet, obj: &Objective<'_>, param: &Param) -> Result<(Vec<f64>, f64)> {
    if res.active_set.is_empty() {
        return Err(Error::InvalidArgument("no active constraints: the solution is interior".into()));
    }
    let z = param.project(&res.estimate.theta_hat);
    let g = DVector::from_vec(optim::gradient(&|w: &[f64]| obj.value_or_inf(&param.embed(w)), &z)?);
    let rows: Vec<Vec<f64>> = res
        .active_set
        .iter()
        .map(|&i| {
            let c = &cs.items[i];
            optim::gradient(&|w: &[f64]| c.value(&param.embed(w)), &z)
        })
        .collect::<Result<_>>()?;
    let d = DMatrix::from_fn(rows.len(), z.len(), |i, j| rows[i][j]);
    let ddt = &d * d.transpose();
    if crate::linalg::rank(&ddt, 1e-10) < rows.len() {
        return Err(Error::Singular("active-constraint Jacobian is rank deficient".into()));
    }
    let gamma = ddt
        .try_inverse()
        .ok_or_else(|| Error::Singular("active-constraint Jacobian is rank deficient".into()))?
        * (&d * &g);
    let resid = (&g - d.transpose() * &gamma).norm();
    Ok((gamma.iter().copied().collect(), resid))
}

/// Kuhn–Tucker multipliers of the active constraints, solving
/// ∇L_T = D'γ in least squares; γ ≥ 0 at a constrained minimum.
pub fn kt_multipliers(res: &CGcovResult, cs: &ConstraintSet, y: &Series, cfg: &GcovConfig) -> Result<Vec<f64>> {
    let obj = Objective::new(y.values(), res.estimate.order, cfg)?;
    let param = Param::new(res.estimate.order, cfg);
    multipliers(res, cs, &obj, &param).map(|(g, _)| g)
}
