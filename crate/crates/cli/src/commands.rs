//! Single-shot commands: simulate, estimate, test, select and binding.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use gcov_core::constraints::ConstraintSet;
use gcov_core::fit::{fit_model, Fitted};
use gcov_core::gcov::{data_starts, sandwich, GcovConfig, SimMode};
use gcov_core::inference::{bootstrap_fitted, nlsd_test, portmanteau_test, ScoreScaling, TestResult};
use gcov_core::misspec::{
    flip_roots, nested_binding, nested_wald, simulated_binding, BindingMode, FlipDirection, NestedWaldOptions,
};
use gcov_core::models::{
    dar_stationarity_diagnostic, mar_simulate, mar_simulate_unchecked, ErrorDist, MarSpec, ModelOrder, ModelSpec,
    MAR_BURN,
};
use gcov_core::selection::{select_dar, select_mar, DarSelectOptions, MarSelectOptions, SelectionReport};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::artifact::{Artifact, Cell, Provenance, Table};
use crate::config::{self, require_seed, Input};

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub scale: f64,
    pub allow_infeasible: bool,
}

impl Default for Ctx {
    fn default() -> Self {
        Ctx { seed: None, out: PathBuf::from("out"), scale: 1.0, allow_infeasible: false }
    }
}

fn default_level() -> f64 {
    0.05
}

fn default_dist() -> ErrorDist {
    ErrorDist::student_t(5.0)
}

pub(crate) fn constraint_set(name: Option<&str>, order: ModelOrder) -> Result<Option<ConstraintSet>> {
    name.map(|n| ConstraintSet::by_name(n, order)).transpose().map_err(Into::into)
}

pub(crate) fn fit(
    y: &[f64],
    order: ModelOrder,
    cfg: &GcovConfig,
    cs: Option<&ConstraintSet>,
    seed: u64,
) -> Result<Fitted> {
    cfg.validate()?;
    let starts = data_starts(y, order, cfg, seed)?;
    Ok(fit_model(y, order, cfg, cs, &starts, true)?)
}

fn params_table(order: ModelOrder, fitted: &Fitted) -> Table {
    let est = fitted.estimate();
    let mut t = Table::new(["parameter", "estimate", "se", "free"]);
    let mut se = est.se.clone().unwrap_or_default().into_iter();
    for (i, (name, v)) in order.param_names().iter().zip(&est.theta_hat).enumerate() {
        let free = est.free.contains(&i);
        let s = if free { se.next() } else { None };
        t.push(vec![name.as_str().into(), (*v).into(), s.into(), free.into()]);
    }
    t
}

fn test_table(label: &str, r: &TestResult) -> Table {
    let mut t = Table::new(["test", "statistic", "dof", "critical_value", "p_value", "reject"]);
    t.push(vec![
        label.into(),
        r.statistic.into(),
        r.dof.into(),
        r.critical_value.into(),
        r.p_value.into(),
        r.reject.into(),
    ]);
    t
}

fn artifact(name: &str, effective: &Value, seed: Option<u64>, result: Value, table: Table) -> Artifact {
    Artifact { name: name.into(), provenance: Provenance::new(effective, seed), result, table, notes: Vec::new() }
}

// simulate

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub spec: ModelSpec,
    pub t: usize,
    #[serde(default = "default_dist")]
    pub dist: ErrorDist,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub fn simulate(raw: Value, ctx: &Ctx) -> Result<Vec<Artifact>> {
    let (c, eff): (SimulateConfig, _) = config::parse(raw)?;
    let seed = require_seed(ctx.seed, c.seed)?;
    if c.t == 0 {
        bail!("T must be positive");
    }
    let feasible = c.spec.is_feasible();
    let (y, e) = match &c.spec {
        ModelSpec::Mar(m) if !feasible => {
            if !ctx.allow_infeasible {
                bail!("{} has roots on the wrong side of the unit circle; pass --allow-infeasible to simulate it anyway", c.spec.order());
            }
            mar_simulate_unchecked(m, &c.dist, c.t, seed, MAR_BURN)?
        }
        ModelSpec::Mar(m) => mar_simulate(m, &c.dist, c.t, seed, MAR_BURN)?,
        ModelSpec::Dar(_) => c.spec.simulate(&c.dist, c.t, seed)?,
    };
    let stationarity = match &c.spec {
        ModelSpec::Dar(d) => dar_stationarity_diagnostic(d, e.values(), 10_000, seed),
        ModelSpec::Mar(_) => None,
    };
    let finite = y.values().iter().all(|v| v.is_finite());
    let summary = json!({
        "order": c.spec.order().to_string(),
        "t": c.t,
        "feasible": feasible,
        "all_finite": finite,
        "dar_log_contraction": stationarity,
    });
    let mut ys = Table::new(["t", "y"]);
    let mut es = Table::new(["t", "eps"]);
    for (i, (a, b)) in y.values().iter().zip(e.values()).enumerate() {
        ys.push(vec![i.into(), (*a).into()]);
        es.push(vec![i.into(), (*b).into()]);
    }
    let mut series = artifact("series", &eff, Some(seed), summary.clone(), ys);
    if !feasible {
        series.notes.push("simulated from an infeasible specification".into());
    }
    Ok(vec![series, artifact("errors", &eff, Some(seed), summary, es)])
}

// estimate

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandwichConfig {
    /// Synthetic samples for I.
    pub replications: usize,
    #[serde(default)]
    pub parametric: Option<ErrorDist>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub input: Input,
    pub order: ModelOrder,
    #[serde(default)]
    pub gcov: GcovConfig,
    /// "mar", "dar" or "jury:r=<n>:<side>"; CGCov when present.
    #[serde(default)]
    pub constraints: Option<String>,
    #[serde(default)]
    pub sandwich: Option<SandwichConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub fn estimate(raw: Value, ctx: &Ctx) -> Result<Vec<Artifact>> {
    let (c, eff): (EstimateConfig, _) = config::parse(raw)?;
    let seed = require_seed(ctx.seed, c.seed)?;
    let y = c.input.load()?.into_values();
    let cs = constraint_set(c.constraints.as_deref(), c.order)?;
    let mut fitted = fit(&y, c.order, &c.gcov, cs.as_ref(), gcov_core::rng::child_seed(seed, &[0]))?;
    if let Some(sw) = &c.sandwich {
        let mode = match sw.parametric {
            Some(dist) => SimMode::Parametric { dist },
            None => SimMode::Resample,
        };
        let with = sandwich(fitted.estimate(), &y, &c.gcov, sw.replications, gcov_core::rng::child_seed(seed, &[1]), &mode)?;
        match &mut fitted {
            Fitted::Gcov(e) => *e = with,
            Fitted::Cgcov(r) => r.estimate = with,
        }
    }
    let table = params_table(c.order, &fitted);
    Ok(vec![artifact("estimate", &eff, Some(seed), serde_json::to_value(&fitted)?, table)])
}

// test

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestKind {
    /// GCov specification test of a fitted model; bootstrap critical
    /// values when `bootstrap` gives B.
    Portmanteau {
        order: ModelOrder,
        #[serde(default)]
        constraints: Option<String>,
        #[serde(default)]
        bootstrap: Option<usize>,
    },
    /// Serial dependence of the raw series.
    Nlsd,
    /// MAR(null) against a larger MAR(alt).
    NestedWald {
        null: ModelOrder,
        alt: ModelOrder,
        replications: usize,
        #[serde(default)]
        constrained: bool,
        /// Prefactor of the S1 score statistic.
        #[serde(default)]
        scaling: ScoreScaling,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    pub input: Input,
    pub test: TestKind,
    #[serde(default)]
    pub gcov: GcovConfig,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub fn test(raw: Value, ctx: &Ctx) -> Result<Vec<Artifact>> {
    let (c, eff): (TestConfig, _) = config::parse(raw)?;
    let y = c.input.load()?.into_values();
    let (seed, result, table) = match &c.test {
        TestKind::Nlsd => {
            let r = nlsd_test(&y, &c.gcov.transforms, c.gcov.h, c.level)?;
            let table = test_table("nlsd", &r);
            (ctx.seed.or(c.seed), json!({ "test": r }), table)
        }
        TestKind::Portmanteau { order, constraints, bootstrap } => {
            let seed = require_seed(ctx.seed, c.seed)?;
            let cs = constraint_set(constraints.as_deref(), *order)?;
            let fitted = fit(&y, *order, &c.gcov, cs.as_ref(), gcov_core::rng::child_seed(seed, &[0]))?;
            let chi = portmanteau_test(&y, &fitted, &c.gcov, c.level)?;
            let mut table = test_table("chi_square", &chi);
            let boot = match bootstrap {
                Some(b) => {
                    let o = bootstrap_fitted(&y, fitted.clone(), &c.gcov, cs.as_ref(), *b, gcov_core::rng::child_seed(seed, &[1]), c.level)?;
                    table.rows.extend(test_table("bootstrap", &o.test).rows);
                    Some(o.test)
                }
                None => None,
            };
            (Some(seed), json!({ "fitted": fitted, "chi_square": chi, "bootstrap": boot }), table)
        }
        TestKind::NestedWald { null, alt, replications, constrained, scaling } => {
            let seed = require_seed(ctx.seed, c.seed)?;
            let (cs_null, cs_alt) = if *constrained {
                (constraint_set(Some("mar"), *null)?, constraint_set(Some("mar"), *alt)?)
            } else {
                (None, None)
            };
            let opts = NestedWaldOptions {
                cs_null: cs_null.as_ref(),
                cs_alt: cs_alt.as_ref(),
                replications: *replications,
                seed,
                level: c.level,
                scaling: *scaling,
            };
            let r = nested_wald(&y, *null, *alt, &c.gcov, &opts)?;
            let mut table = test_table("w1", &r.w1);
            table.rows.extend(test_table("j_weighted", &r.j_weighted).rows);
            if let Some(s1) = &r.s1 {
                table.rows.extend(test_table("s1", s1).rows);
            }
            (Some(seed), serde_json::to_value(&r)?, table)
        }
    };
    Ok(vec![artifact("test", &eff, seed, result, table)])
}

// selection

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectMarConfig {
    pub input: Input,
    #[serde(default)]
    pub gcov: GcovConfig,
    #[serde(default = "five")]
    pub max_p: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "yes")]
    pub constrained: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn five() -> usize {
    5
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectDarConfig {
    pub input: Input,
    #[serde(default)]
    pub gcov: GcovConfig,
    #[serde(default = "five")]
    pub max_order: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Bootstrap resamples per test.
    pub b: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Trail of a selection run as one row per candidate.
pub fn trail_table(r: &SelectionReport) -> Table {
    let mut t = Table::new([
        "step",
        "model",
        "theta_hat",
        "objective",
        "statistic",
        "critical_value",
        "method",
        "lag_moduli",
        "lead_moduli",
        "boundary",
        "decision",
    ]);
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    let tag = |v: Value| v.as_str().unwrap_or_default().to_string();
    for e in &r.trail {
        t.push(vec![
            tag(json!(e.step)).into(),
            e.order.to_string().into(),
            e.theta_hat.as_deref().map(join).into(),
            e.objective.into(),
            e.test.as_ref().map(|x| x.statistic).into(),
            e.test.as_ref().map(|x| x.critical_value).into(),
            e.test.as_ref().map(|x| tag(json!(x.method)).to_lowercase()).into(),
            e.roots.as_ref().map(|x| join(&x.lag)).into(),
            e.roots.as_ref().map(|x| join(&x.lead)).into(),
            e.boundary.into(),
            tag(json!(e.decision)).into(),
        ]);
    }
    t
}

pub fn select_mar_cmd(raw: Value, ctx: &Ctx) -> Result<Vec<Artifact>> {
    let (c, eff): (SelectMarConfig, _) = config::parse(raw)?;
    let seed = require_seed(ctx.seed, c.seed)?;
    let y = c.input.load()?.into_values();
    let opts = MarSelectOptions { max_p: c.max_p, level: c.level, constrained: c.constrained, seed };
    let r = select_mar(&y, &c.gcov, &opts)?;
    Ok(vec![artifact("select_mar", &eff, Some(seed), serde_json::to_value(&r)?, trail_table(&r))])
}

pub fn select_dar_cmd(raw: Value, ctx: &Ctx) -> Result<Vec<Artifact>> {
    let (c, eff): (SelectDarConfig, _) = config::parse(raw)?;
    let seed = require_seed(ctx.seed, c.seed)?;
    let y = c.input.load()?.into_values();
    let opts = DarSelectOptions { max_order: c.max_order, level: c.level, b: c.b, seed };
    let r = select_dar(&y, &c.gcov, &opts)?;
    Ok(vec![artifact("select_dar", &eff, Some(seed), serde_json::to_value(&r)?, trail_table(&r))])
}

// binding

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BindingConfig {
    /// Closed-form root flip of q roots.
    Flip {
        spec: MarSpec,
        q: usize,
        #[serde(default = "lag_to_lead")]
        direction: FlipDirection,
    },
    /// Embedding of a MAR in a larger MAR(r, s).
    Nested { spec: MarSpec, r: usize, s: usize },
    /// b_{T,S}: `to` fitted to S resamples generated by `from` fitted on the data.
    Simulated {
        input: Input,
        from: ModelOrder,
        to: ModelOrder,
        s: usize,
        #[serde(default)]
        gcov: GcovConfig,
        #[serde(default)]
        constraints: Option<String>,
        #[serde(default = "resample")]
        mode: BindingMode,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn lag_to_lead() -> FlipDirection {
    FlipDirection::LagToLead
}

fn resample() -> BindingMode {
    BindingMode::Resample
}

pub fn binding(raw: Value, ctx: &Ctx) -> Result<Vec<Artifact>> {
    let (c, eff): (BindingConfig, _) = config::parse(raw)?;
    match c {
        BindingConfig::Flip { spec, q, direction } => {
            let r = flip_roots(&spec, q, direction)?;
            let mut t = Table::new(["candidate", "phi", "psi", "scale", "flipped"]);
            for (i, cand) in r.candidates.iter().enumerate() {
                let join = |v: &[f64]| v.iter().map(|x| format!("{x:.10}")).collect::<Vec<_>>().join(" ");
                let flipped = cand.flip_subset.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
                t.push(vec![i.into(), join(&cand.spec.phi).into(), join(&cand.spec.psi).into(), cand.scale.into(), flipped.into()]);
            }
            Ok(vec![artifact("binding", &eff, None, serde_json::to_value(&r)?, t)])
        }
        BindingConfig::Nested { spec, r, s } => {
            let b = nested_binding(&spec, r, s)?;
            let mut t = Table::new(["parameter", "value"]);
            for (name, v) in ModelOrder::mar(r, s).param_names().iter().zip(b.theta()) {
                t.push(vec![name.as_str().into(), v.into()]);
            }
            Ok(vec![artifact("binding", &eff, None, serde_json::to_value(&b)?, t)])
        }
        BindingConfig::Simulated { input, from, to, s, gcov, constraints, mode, seed } => {
            let seed = require_seed(ctx.seed, seed)?;
            let y = input.load()?.into_values();
            let cs_from = constraint_set(constraints.as_deref(), from)?;
            let cs_to = constraint_set(constraints.as_deref(), to)?;
            let m1 = fit(&y, from, &gcov, cs_from.as_ref(), gcov_core::rng::child_seed(seed, &[0]))?;
            let r = simulated_binding(&y, m1.estimate(), to, &gcov, cs_to.as_ref(), s, gcov_core::rng::child_seed(seed, &[1]), mode)
                .with_context(|| format!("simulated binding of {to} under {from}"))?;
            let mut t = Table::new(["parameter", "b_ts"]);
            for (name, v) in to.param_names().iter().zip(&r.b_ts) {
                t.push(vec![name.as_str().into(), Cell::from(*v)]);
            }
            let result = json!({ "from": m1, "binding": r });
            Ok(vec![artifact("binding", &eff, Some(seed), result, t)])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(dir: &std::path::Path, seed: Option<u64>) -> Ctx {
        Ctx { seed, out: dir.to_path_buf(), ..Default::default() }
    }

    #[test]
    fn simulate_mar_has_requested_length() {
        let dir = tempfile::tempdir().unwrap();
        let raw = json!({"spec": {"model": "mar", "r": 1, "s": 1, "phi": [0.3], "psi": [0.8]}, "t": 1000});
        let a = simulate(raw, &ctx(dir.path(), Some(7))).unwrap();
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|x| x.table.rows.len() == 1000));
    }

    #[test]
    fn simulate_needs_seed() {
        let dir = tempfile::tempdir().unwrap();
        let raw = json!({"spec": {"model": "dar", "p": 1, "q": 1, "phi": [0.5], "omega": 1.0, "alpha": [0.4]}, "t": 10});
        assert!(simulate(raw, &ctx(dir.path(), None)).is_err());
    }

    #[test]
    fn infeasible_needs_flag() {
        let dir = tempfile::tempdir().unwrap();
        let raw = json!({"spec": {"model": "mar", "r": 2, "s": 0, "phi": [0.8, 0.4], "psi": []}, "t": 100});
        assert!(simulate(raw.clone(), &ctx(dir.path(), Some(1))).is_err());
        let c = Ctx { allow_infeasible: true, ..ctx(dir.path(), Some(1)) };
        let a = simulate(raw, &c).unwrap();
        assert_eq!(a[0].table.rows.len(), 100);
    }

    #[test]
    fn flip_binding_example() {
        let raw = json!({"kind": "flip", "spec": {"r": 1, "s": 1, "phi": [0.3], "psi": [0.8]}, "q": 1});
        let a = binding(raw, &Ctx::default()).unwrap();
        let theta = a[0].result["candidates"][0]["spec"]["psi"].as_array().unwrap().clone();
        let b: Vec<f64> = theta.iter().map(|v| v.as_f64().unwrap()).collect();
        // (1 - 0.3 F)(1 - 0.8 F) after flipping 0.3: psi = (0.8 + 1/0.3, -0.8/0.3)
        assert!((b[0] - (0.8 + 1.0 / 0.3)).abs() < 1e-10);
        assert!((b[1] + 0.8 / 0.3).abs() < 1e-10);
    }

    #[test]
    fn unknown_keys_fail() {
        let raw = json!({"kind": "nested", "spec": {"r": 0, "s": 1, "phi": [], "psi": [0.5]}, "r": 0, "s": 2, "extra": 1});
        assert!(binding(raw, &Ctx::default()).is_err());
    }
}
