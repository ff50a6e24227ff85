//! A fitted model from either estimator.

use serde::{Deserialize, Serialize};

use crate::constraints::{cgcov::cgcov_estimate_raw, CGcovResult, ConstraintSet};
use crate::error::Result;
use crate::gcov::{gcov_estimate_raw, EstimationResult, GcovConfig};
use crate::models::ModelOrder;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "lowercase")]
pub enum Fitted {
    Gcov(EstimationResult),
    Cgcov(CGcovResult),
}

impl Fitted {
    pub fn estimate(&self) -> &EstimationResult {
        match self {
            Fitted::Gcov(e) => e,
            Fitted::Cgcov(c) => &c.estimate,
        }
    }

    pub fn theta_hat(&self) -> &[f64] {
        &self.estimate().theta_hat
    }

    pub fn order(&self) -> ModelOrder {
        self.estimate().order
    }

    /// True when a constraint is active at θ̂.
    pub fn on_boundary(&self) -> bool {
        matches!(self, Fitted::Cgcov(c) if c.boundary_flag)
    }
}

impl From<EstimationResult> for Fitted {
    fn from(e: EstimationResult) -> Self {
        Fitted::Gcov(e)
    }
}

impl From<CGcovResult> for Fitted {
    fn from(c: CGcovResult) -> Self {
        Fitted::Cgcov(c)
    }
}

/// GCov when `cs` is `None`, CGCov otherwise.
pub fn fit_model(
    y: &[f64],
    order: ModelOrder,
    cfg: &GcovConfig,
    cs: Option<&ConstraintSet>,
    starts: &[Vec<f64>],
    with_j: bool,
) -> Result<Fitted> {
    Ok(match cs {
        None => Fitted::Gcov(gcov_estimate_raw(y, order, cfg, starts, with_j)?),
        Some(cs) => Fitted::Cgcov(cgcov_estimate_raw(y, order, cfg, cs, starts, None, with_j)?),
    })
}
