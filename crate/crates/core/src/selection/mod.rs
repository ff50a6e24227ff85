//! Order selection for MAR(r,s) and DAR(p,q) models.

use serde::{Deserialize, Serialize};

use crate::constraints::{dar_constraints, mar_constraints};
use crate::error::{Error, Result};
use crate::fit::{fit_model, Fitted};
use crate::gcov::{data_starts, default_starts, to_dmatrix, GcovConfig};
use crate::inference::{bootstrap_fitted, portmanteau_test, wald_w3, TestResult};
use crate::misspec::{simulated_binding, BindingMode};
use crate::models::{MarSpec, ModelOrder, ModelSpec};
use crate::rng::child_seed;

/// A candidate meets the root-side conditions when every inverse-root
/// modulus is below 1 by at least this much.
pub const SIDE_TOL: f64 = 1e-3;

/// Replications behind the simulated bindings of the MAR tie-break.
pub const TIE_BREAK_S: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    /// Total order (MAR) or max(p, q) (DAR).
    Order,
    /// MAR split of the total order.
    Split,
    /// MAR Wald comparison of tied candidates.
    TieBreak,
    /// DAR(p', q), q < p'.
    FixP,
    /// DAR(p, p'), p < p'.
    FixQ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    IidAccepted,
    IidRejected,
    SidesSatisfied,
    SidesViolated,
    WaldAccepted,
    WaldRejected,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootModuli {
    /// Inverse-root moduli of the lag polynomial, descending.
    pub lag: Vec<f64>,
    pub lead: Vec<f64>,
}

impl RootModuli {
    fn of(spec: &MarSpec) -> Option<Self> {
        let side = |c: &[f64], r: Option<crate::models::RootSet>| {
            if c.is_empty() {
                Some(Vec::new())
            } else {
                r.map(|r| r.moduli())
            }
        };
        Some(RootModuli { lag: side(&spec.phi, spec.lag_roots())?, lead: side(&spec.psi, spec.lead_roots())? })
    }

    pub fn satisfied(&self) -> bool {
        self.lag.iter().chain(&self.lead).all(|m| *m <= 1.0 - SIDE_TOL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrailEntry {
    pub step: Step,
    pub order: ModelOrder,
    pub theta_hat: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub boundary: bool,
    pub test: Option<TestResult>,
    pub roots: Option<RootModuli>,
    pub decision: Decision,
    pub note: Option<String>,
}

impl TrailEntry {
    fn failed(step: Step, order: ModelOrder, err: &Error) -> Self {
        TrailEntry {
            step,
            order,
            theta_hat: None,
            objective: None,
            boundary: false,
            test: None,
            roots: None,
            decision: Decision::Failed,
            note: Some(err.to_string()),
        }
    }

    fn from_fit(step: Step, fit: &Fitted, test: Option<TestResult>, decision: Decision) -> Self {
        TrailEntry {
            step,
            order: fit.order(),
            theta_hat: Some(fit.theta_hat().to_vec()),
            objective: Some(fit.estimate().objective),
            boundary: fit.on_boundary(),
            test,
            roots: None,
            decision,
            note: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Chosen {
    Model { spec: ModelSpec },
    Ambiguous { specs: Vec<ModelSpec> },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub chosen: Chosen,
    pub trail: Vec<TrailEntry>,
    /// Selected total order p (MAR) or p' = max(p, q) (DAR).
    pub p_total: Option<usize>,
    pub warnings: Vec<String>,
}

impl SelectionReport {
    /// Orders of the chosen model(s).
    pub fn chosen_orders(&self) -> Vec<ModelOrder> {
        match &self.chosen {
            Chosen::Model { spec } => vec![spec.order()],
            Chosen::Ambiguous { specs } => specs.iter().map(ModelSpec::order).collect(),
            Chosen::None => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarSelectOptions {
    pub max_p: usize,
    pub level: f64,
    /// Fit the split step with CGCov under the root constraints and break
    /// ties with a Wald comparison.
    pub constrained: bool,
    pub seed: u64,
}

fn mar_spec(fit: &Fitted) -> Result<MarSpec> {
    match fit.estimate().spec()? {
        ModelSpec::Mar(m) => Ok(m),
        ModelSpec::Dar(_) => Err(Error::InvalidArgument("expected a MAR fit".into())),
    }
}

/// Causal AR(p) for p = 1..max_p until the portmanteau test accepts, then
/// every MAR(r, p - r), keeping those whose roots lie on the right sides.
pub fn select_mar(y: &[f64], cfg: &GcovConfig, opts: &MarSelectOptions) -> Result<SelectionReport> {
    if opts.max_p == 0 {
        return Err(Error::InvalidArgument("max_p must be at least 1".into()));
    }
    let mut trail = Vec::new();
    let mut warnings = Vec::new();
    let mut p_total = None;
    let mut best: Option<(usize, f64)> = None;
    for p in 1..=opts.max_p {
        let order = ModelOrder::mar(p, 0);
        let outcome = default_starts(order, cfg, child_seed(opts.seed, &[1, p as u64]))
            .and_then(|s| fit_model(y, order, cfg, None, &s, false))
            .and_then(|f| portmanteau_test(y, &f, cfg, opts.level).map(|t| (f, t)));
        match outcome {
            Ok((fit, test)) => {
                let accepted = !test.reject;
                if best.is_none_or(|(_, pv)| test.p_value > pv) {
                    best = Some((p, test.p_value));
                }
                let decision = if accepted { Decision::IidAccepted } else { Decision::IidRejected };
                trail.push(TrailEntry::from_fit(Step::Order, &fit, Some(test), decision));
                if accepted {
                    p_total = Some(p);
                    break;
                }
            }
            Err(e) => trail.push(TrailEntry::failed(Step::Order, order, &e)),
        }
    }
    let p = match (p_total, best) {
        (Some(p), _) => p,
        (None, Some((p, _))) => {
            warnings.push(format!(
                "no causal AR(p) with p <= {} has i.i.d. residuals; continuing with p = {p}, the largest p-value",
                opts.max_p
            ));
            p
        }
        (None, None) => {
            warnings.push("no causal AR(p) could be fitted".into());
            return Ok(SelectionReport { chosen: Chosen::None, trail, p_total: None, warnings });
        }
    };

    let mut passed: Vec<(MarSpec, Fitted)> = Vec::new();
    for r in (0..=p).rev() {
        let order = ModelOrder::mar(r, p - r);
        let cs = if opts.constrained { Some(mar_constraints(r, p - r)?) } else { None };
        let outcome = default_starts(order, cfg, child_seed(opts.seed, &[2, r as u64]))
            .and_then(|s| fit_model(y, order, cfg, cs.as_ref(), &s, false))
            .and_then(|f| mar_spec(&f).map(|m| (f, m)));
        match outcome {
            Ok((fit, spec)) => {
                let roots = RootModuli::of(&spec);
                let ok = roots.as_ref().is_some_and(RootModuli::satisfied);
                let decision = if ok { Decision::SidesSatisfied } else { Decision::SidesViolated };
                let mut entry = TrailEntry::from_fit(Step::Split, &fit, None, decision);
                entry.roots = roots;
                trail.push(entry);
                if ok {
                    passed.push((spec, fit));
                }
            }
            Err(e) => trail.push(TrailEntry::failed(Step::Split, order, &e)),
        }
    }

    let chosen = match passed.len() {
        0 => {
            warnings.push(format!("no MAR(r,s) with r + s = {p} satisfies the root conditions"));
            Chosen::None
        }
        1 => Chosen::Model { spec: ModelSpec::Mar(passed.remove(0).0) },
        _ if opts.constrained => tie_break(y, cfg, &passed, opts, &mut trail, &mut warnings)?,
        _ => Chosen::Ambiguous { specs: passed.into_iter().map(|(m, _)| ModelSpec::Mar(m)).collect() },
    };
    Ok(SelectionReport { chosen, trail, p_total: Some(p), warnings })
}

/// For each tied candidate A, test "A is correct" by comparing every other
/// candidate's estimate with its simulated binding under A. Keep the
/// candidates that are never rejected.
fn tie_break(
    y: &[f64],
    cfg: &GcovConfig,
    passed: &[(MarSpec, Fitted)],
    opts: &MarSelectOptions,
    trail: &mut Vec<TrailEntry>,
    warnings: &mut Vec<String>,
) -> Result<Chosen> {
    let mut survivors = Vec::new();
    for (i, (spec_a, fit_a)) in passed.iter().enumerate() {
        let mut ok = true;
        for (j, (_, fit_b)) in passed.iter().enumerate() {
            if i == j {
                continue;
            }
            let order_b = fit_b.order();
            let (r, s) = match order_b {
                ModelOrder::Mar { r, s } => (r, s),
                ModelOrder::Dar { .. } => unreachable!("MAR selection fits MAR models"),
            };
            let cs = mar_constraints(r, s)?;
            let seed = child_seed(opts.seed, &[3, i as u64, j as u64]);
            let res = simulated_binding(y, fit_a.estimate(), order_b, cfg, Some(&cs), TIE_BREAK_S, seed, BindingMode::Resample)
                .and_then(|sb| {
                    let om = to_dmatrix(sb.omega_s.as_ref().expect("resample mode has Ω_S"));
                    wald_w3(fit_b.theta_hat(), &sb.b_ts, &om, y.len(), opts.level)
                });
            match res {
                Ok(test) => {
                    let rejected = test.reject;
                    let d = if rejected { Decision::WaldRejected } else { Decision::WaldAccepted };
                    let mut entry = TrailEntry::from_fit(Step::TieBreak, fit_b, Some(test), d);
                    entry.note = Some(format!("{} under {}", order_b, fit_a.order()));
                    trail.push(entry);
                    ok &= !rejected;
                }
                Err(e) => {
                    let mut entry = TrailEntry::failed(Step::TieBreak, order_b, &e);
                    entry.note = Some(format!("{} under {}: {e}", order_b, fit_a.order()));
                    trail.push(entry);
                }
            }
        }
        if ok {
            survivors.push(ModelSpec::Mar(spec_a.clone()));
        }
    }
    Ok(match survivors.len() {
        1 => Chosen::Model { spec: survivors.remove(0) },
        0 => {
            warnings.push("the Wald comparison rejected every tied candidate".into());
            Chosen::Ambiguous { specs: passed.iter().map(|(m, _)| ModelSpec::Mar(m.clone())).collect() }
        }
        _ => Chosen::Ambiguous { specs: survivors },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DarSelectOptions {
    pub max_order: usize,
    pub level: f64,
    /// Bootstrap resamples per test.
    pub b: usize,
    pub seed: u64,
}

/// DAR(i) for i = 1.. until the bootstrap test accepts, giving p'; then
/// DAR(p', q) for q < p', then DAR(p, p') for p < p', else DAR(p').
pub fn select_dar(y: &[f64], cfg: &GcovConfig, opts: &DarSelectOptions) -> Result<SelectionReport> {
    if opts.max_order == 0 {
        return Err(Error::InvalidArgument("max_order must be at least 1".into()));
    }
    let mut trail = Vec::new();
    let mut warnings = Vec::new();
    let try_order = |step: Step, p: usize, q: usize, trail: &mut Vec<TrailEntry>| -> Result<Option<Fitted>> {
        let order = ModelOrder::dar(p, q);
        let cs = dar_constraints(p, q)?;
        let tag = [step as u64, p as u64, q as u64];
        let outcome = data_starts(y, order, cfg, child_seed(opts.seed, &[tag[0], tag[1], tag[2], 0]))
            .and_then(|s| fit_model(y, order, cfg, Some(&cs), &s, false))
            .and_then(|f| bootstrap_fitted(y, f, cfg, Some(&cs), opts.b, child_seed(opts.seed, &tag), opts.level));
        match outcome {
            Ok(out) => {
                let accepted = !out.test.reject;
                let d = if accepted { Decision::IidAccepted } else { Decision::IidRejected };
                trail.push(TrailEntry::from_fit(step, &out.fitted, Some(out.test), d));
                Ok(accepted.then_some(out.fitted))
            }
            Err(e @ (Error::InvalidArgument(_) | Error::Dimension(_))) => Err(e),
            Err(e) => {
                trail.push(TrailEntry::failed(step, order, &e));
                Ok(None)
            }
        }
    };
    let mut found = None;
    for i in 1..=opts.max_order {
        if let Some(f) = try_order(Step::Order, i, i, &mut trail)? {
            found = Some((i, f));
            break;
        }
    }
    let Some((pp, full)) = found else {
        warnings.push(format!("no DAR(i) with i <= {} has i.i.d. residuals", opts.max_order));
        return Ok(SelectionReport { chosen: Chosen::None, trail, p_total: None, warnings });
    };
    let pick = |f: &Fitted| f.estimate().spec().map(|spec| Chosen::Model { spec });
    for q in 1..pp {
        if let Some(f) = try_order(Step::FixP, pp, q, &mut trail)? {
            return Ok(SelectionReport { chosen: pick(&f)?, trail, p_total: Some(pp), warnings });
        }
    }
    for p in 1..pp {
        if let Some(f) = try_order(Step::FixQ, p, pp, &mut trail)? {
            return Ok(SelectionReport { chosen: pick(&f)?, trail, p_total: Some(pp), warnings });
        }
    }
    Ok(SelectionReport { chosen: pick(&full)?, trail, p_total: Some(pp), warnings })
}

#[cfg(test)]
mod tests;
