//! The two empirical pipelines: a detrended producer price index analysed
//! with MAR models and a differenced T-bill rate analysed with DAR(1).
//!
//! Both read user-supplied CSV extracts. PPIDES: monthly FRED series,
//! columns `observation_date,PPIDES`, November 2009 to January 2023. TB3MS:
//! monthly FRED series, columns `observation_date,TB3MS`, January 1934 to
//! April 2025.

use std::path::PathBuf;

use anyhow::Result;
use gcov_core::constraints::{dar_constraints, mar_constraints};
use gcov_core::fit::Fitted;
use gcov_core::gcov::{GcovConfig, TransformSet};
use gcov_core::inference::{bootstrap_fitted, nlsd_test, portmanteau_test, TestResult};
use gcov_core::models::{ModelOrder, ModelSpec};
use gcov_core::rng::child_seed;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::artifact::{Artifact, Cell, Provenance, Table};
use crate::commands::{fit, Ctx};
use crate::config::{self, require_seed, Input, Preprocess};

fn ppides_input() -> Input {
    Input { path: PathBuf::from("data/ppides.csv"), column: None, preprocess: vec![Preprocess::Detrend] }
}

fn tb3ms_input() -> Input {
    Input { path: PathBuf::from("data/tb3ms.csv"), column: None, preprocess: vec![Preprocess::Difference] }
}

fn ten() -> usize {
    10
}

fn default_b() -> usize {
    499
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpidesConfig {
    #[serde(default = "ppides_input")]
    pub input: Input,
    #[serde(default = "ten")]
    pub h: usize,
    /// Largest causal order tried in the order step.
    #[serde(default = "five")]
    pub max_p: usize,
    #[serde(default = "starts")]
    pub n_starts: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn five() -> usize {
    5
}

fn starts() -> usize {
    20
}

/// One fitted MAR with its specification test and root moduli, as printed
/// in the order-selection and estimation tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarRow {
    pub panel: String,
    pub order: ModelOrder,
    pub theta_hat: Vec<f64>,
    pub se: Option<Vec<f64>>,
    pub test: TestResult,
    /// Moduli of the roots of Φ(z), which should exceed one.
    pub lag_root_moduli: Vec<f64>,
    /// Moduli of the roots of Ψ(z⁻¹) in z, which should be below one.
    pub lead_root_moduli: Vec<f64>,
}

fn mar_row(panel: &str, y: &[f64], f: &Fitted, cfg: &GcovConfig) -> Result<MarRow> {
    let test = portmanteau_test(y, f, cfg, 0.05)?;
    let (lag, lead) = match f.estimate().spec()? {
        ModelSpec::Mar(m) => (
            m.lag_roots().map(|r| r.root_moduli()).unwrap_or_default(),
            m.lead_roots().map(|r| r.moduli()).unwrap_or_default(),
        ),
        ModelSpec::Dar(_) => (Vec::new(), Vec::new()),
    };
    Ok(MarRow {
        panel: panel.into(),
        order: f.order(),
        theta_hat: f.theta_hat().to_vec(),
        se: f.estimate().se.clone(),
        test,
        lag_root_moduli: lag,
        lead_root_moduli: lead,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpidesReport {
    pub n: usize,
    pub nlsd: TestResult,
    /// Causal AR(p) fits up to the first accepted p.
    pub order_rows: Vec<MarRow>,
    pub selected_p: Option<usize>,
    /// Unconstrained (UC) and constrained (C) MAR(1,1) and MAR(1,2).
    pub panels: Vec<MarRow>,
}

pub fn ppides_config(h: usize) -> GcovConfig {
    GcovConfig::new(h, TransformSet::powers(2))
}

pub fn ppides_pipeline(y: &[f64], h: usize, max_p: usize, n_starts: usize, seed: u64) -> Result<PpidesReport> {
    let cfg = ppides_config(h).with_starts(n_starts);
    let nlsd = nlsd_test(y, &cfg.transforms, h, 0.05)?;
    let mut order_rows = Vec::new();
    let mut selected_p = None;
    for p in 1..=max_p {
        let f = fit(y, ModelOrder::mar(p, 0), &cfg, None, child_seed(seed, &[1, p as u64]))?;
        let row = mar_row("order", y, &f, &cfg)?;
        let accepted = !row.test.reject;
        order_rows.push(row);
        if accepted {
            selected_p = Some(p);
            break;
        }
    }
    let mut panels = Vec::new();
    for (tag, constrained) in [("UC", false), ("C", true)] {
        for (i, order) in [ModelOrder::mar(1, 1), ModelOrder::mar(1, 2)].into_iter().enumerate() {
            let ModelOrder::Mar { r, s } = order else { unreachable!() };
            let cs = constrained.then(|| mar_constraints(r, s)).transpose()?;
            let f = fit(y, order, &cfg, cs.as_ref(), child_seed(seed, &[2, constrained as u64, i as u64]))?;
            panels.push(mar_row(tag, y, &f, &cfg)?);
        }
    }
    Ok(PpidesReport { n: y.len(), nlsd, order_rows, selected_p, panels })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
}

pub fn replicate_ppides(raw: Value, ctx: &Ctx) -> Result<Vec<Artifact>> {
    let (c, eff): (PpidesConfig, _) = config::parse(raw)?;
    let seed = require_seed(ctx.seed, c.seed)?;
    let y = c.input.load()?.into_values();
    let r = ppides_pipeline(&y, c.h, c.max_p, c.n_starts, seed)?;
    let mut t = Table::new(["panel", "model", "theta_hat", "statistic", "critical_value", "reject", "lag_root_moduli", "lead_root_moduli"]);
    t.push(vec!["nlsd".into(), Cell::Missing, Cell::Missing, r.nlsd.statistic.into(), r.nlsd.critical_value.into(), r.nlsd.reject.into(), Cell::Missing, Cell::Missing]);
    for row in r.order_rows.iter().chain(&r.panels) {
        t.push(vec![
            row.panel.as_str().into(),
            row.order.to_string().into(),
            join(&row.theta_hat).into(),
            row.test.statistic.into(),
            row.test.critical_value.into(),
            row.test.reject.into(),
            join(&row.lag_root_moduli).into(),
            join(&row.lead_root_moduli).into(),
        ]);
    }
    Ok(vec![Artifact {
        name: "ppides".into(),
        provenance: Provenance::new(&eff, Some(seed)),
        result: serde_json::to_value(&r)?,
        table: t,
        notes: Vec::new(),
    }])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tb3msConfig {
    #[serde(default = "tb3ms_input")]
    pub input: Input,
    #[serde(default = "ten")]
    pub h: usize,
    /// Number of power transforms.
    #[serde(default = "four")]
    pub k: u32,
    #[serde(default = "default_b")]
    pub b: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn four() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tb3msReport {
    pub n: usize,
    pub fitted: Fitted,
    pub phi: f64,
    pub omega: f64,
    pub alpha: f64,
    pub chi_square: TestResult,
    pub bootstrap: TestResult,
}

pub fn tb3ms_pipeline(y: &[f64], h: usize, k: u32, b: usize, seed: u64) -> Result<Tb3msReport> {
    let cfg = GcovConfig::new(h, TransformSet::powers(k));
    let order = ModelOrder::dar(1, 1);
    let cs = dar_constraints(1, 1)?;
    let fitted = fit(y, order, &cfg, Some(&cs), child_seed(seed, &[0]))?;
    let chi_square = portmanteau_test(y, &fitted, &cfg, 0.05)?;
    let bootstrap = bootstrap_fitted(y, fitted.clone(), &cfg, Some(&cs), b, child_seed(seed, &[1]), 0.05)?.test;
    let th = fitted.theta_hat().to_vec();
    Ok(Tb3msReport { n: y.len(), phi: th[0], omega: th[1], alpha: th[2], fitted, chi_square, bootstrap })
}

pub fn replicate_tb3ms(raw: Value, ctx: &Ctx) -> Result<Vec<Artifact>> {
    let (c, eff): (Tb3msConfig, _) = config::parse(raw)?;
    let seed = require_seed(ctx.seed, c.seed)?;
    let y = c.input.load()?.into_values();
    let r = tb3ms_pipeline(&y, c.h, c.k, c.b, seed)?;
    let mut t = Table::new(["phi", "alpha", "omega", "alpha_over_omega", "statistic", "chi_square_cv", "bootstrap_cv"]);
    t.push(vec![
        r.phi.into(),
        r.alpha.into(),
        r.omega.into(),
        (r.alpha / r.omega).into(),
        r.chi_square.statistic.into(),
        r.chi_square.critical_value.into(),
        r.bootstrap.critical_value.into(),
    ]);
    let mut notes = Vec::new();
    if r.fitted.estimate().free.len() < 3 {
        notes.push("omega is pinned at 1 because the transforms are homogeneous; only alpha/omega is identified".into());
    }
    Ok(vec![Artifact {
        name: "tb3ms".into(),
        provenance: Provenance::new(&eff, Some(seed)),
        result: json!(r),
        table: t,
        notes,
    }])
}

#[cfg(test)]
mod tests {
    use super::*;
    use gcov_core::models::{ErrorDist, MarSpec};

    #[test]
    fn ppides_pipeline_on_simulated_mar11() {
        let spec = ModelSpec::Mar(MarSpec::new(vec![0.5], vec![0.8]).unwrap());
        let y = spec.simulate(&ErrorDist::student_t(3.0), 300, 5).unwrap().0.into_values();
        let r = ppides_pipeline(&y, 5, 3, 6, 1).unwrap();
        assert_eq!(r.panels.len(), 4);
        assert!(!r.order_rows.is_empty());
        let c11 = &r.panels[2];
        assert_eq!((c11.panel.as_str(), c11.order), ("C", ModelOrder::mar(1, 1)));
        assert!(c11.lag_root_moduli[0] >= 1.0 - 1e-9);
        assert!(c11.lead_root_moduli[0] <= 1.0 + 1e-9);
    }

    #[test]
    fn configs_have_defaults() {
        let (c, _): (Tb3msConfig, _) = config::parse(json!({})).unwrap();
        assert_eq!((c.h, c.k, c.b), (10, 4, 499));
        assert_eq!(c.input.preprocess, vec![Preprocess::Difference]);
        let (c, _): (PpidesConfig, _) = config::parse(json!({"h": 3})).unwrap();
        assert_eq!(c.h, 3);
        assert_eq!(c.input.preprocess, vec![Preprocess::Detrend]);
    }
}
