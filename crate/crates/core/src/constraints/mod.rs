//! Inequality constraints q(θ) ≥ 0 and the constrained estimator.

pub(crate) mod cgcov;
mod jury;

pub use cgcov::{cgcov_estimate, kt_multipliers, CGcovResult, LadderStep, PENALTY_LADDER};
pub use jury::{jury_constraints, jury_feasible, jury_values, RootSide};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::models::ModelOrder;

/// Margin used for strict inequalities and for the DAR intercept.
pub const STRICT_EPS: f64 = 1e-8;

type Eval = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    LowerBound { index: usize, bound: f64 },
    General(Eval),
}

/// One inequality q(θ) ≥ 0. Strict constraints are shifted by
/// [`STRICT_EPS`], so `value` is nonnegative exactly on the feasible set.
#[derive(Clone)]
pub struct Constraint {
    pub label: String,
    pub strict: bool,
    kind: Kind,
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Constraint").field("label", &self.label).field("strict", &self.strict).finish()
    }
}

impl Constraint {
    /// θ_index ≥ bound.
    pub fn lower_bound(label: impl Into<String>, index: usize, bound: f64) -> Self {
        Constraint { label: label.into(), strict: false, kind: Kind::LowerBound { index, bound } }
    }

    pub fn general(label: impl Into<String>, strict: bool, eval: Eval) -> Self {
        Constraint { label: label.into(), strict, kind: Kind::General(eval) }
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let raw = match &self.kind {
            Kind::LowerBound { index, bound } => theta[*index] - bound,
            Kind::General(f) => f(theta),
        };
        if self.strict {
            raw - STRICT_EPS
        } else {
            raw
        }
    }

    pub fn as_lower_bound(&self) -> Option<(usize, f64)> {
        match self.kind {
            Kind::LowerBound { index, bound } => Some((index, bound)),
            Kind::General(_) => None,
        }
    }

    fn shifted(&self, offset: usize) -> Self {
        let kind = match &self.kind {
            Kind::LowerBound { index, bound } => Kind::LowerBound { index: index + offset, bound: *bound },
            Kind::General(f) => {
                let f = f.clone();
                Kind::General(Arc::new(move |th: &[f64]| f(&th[offset..])))
            }
        };
        Constraint { label: self.label.clone(), strict: self.strict, kind }
    }
}

/// A list of constraints on parameter vectors of a fixed length.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub items: Vec<Constraint>,
    dim: usize,
}

impl ConstraintSet {
    pub fn new(items: Vec<Constraint>, dim: usize) -> Self {
        ConstraintSet { items, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn values(&self, theta: &[f64]) -> Vec<f64> {
        self.items.iter().map(|c| c.value(theta)).collect()
    }

    pub fn is_feasible(&self, theta: &[f64]) -> bool {
        self.items.iter().all(|c| c.value(theta) >= 0.0)
    }

    /// Largest violation max(0, -q).
    pub fn max_violation(&self, theta: &[f64]) -> f64 {
        self.items.iter().map(|c| (-c.value(theta)).max(0.0)).fold(0.0, f64::max)
    }

    /// Σ max(0, -q)².
    pub fn penalty(&self, theta: &[f64]) -> f64 {
        self.items.iter().map(|c| (-c.value(theta)).max(0.0).powi(2)).sum()
    }

    /// Embed into a vector of length `dim` starting at `offset`.
    pub fn embed(&self, offset: usize, dim: usize) -> Self {
        ConstraintSet { items: self.items.iter().map(|c| c.shifted(offset)).collect(), dim }
    }

    pub fn union(mut self, other: ConstraintSet) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Dimension("constraint sets act on different parameter lengths".into()));
        }
        self.items.extend(other.items);
        Ok(self)
    }

    /// Constraint set by name: "mar", "dar" or "jury:r=<n>:<outside|inside>"
    /// (the latter on the first n coordinates).
    pub fn by_name(name: &str, order: ModelOrder) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown constraint set {name:?} for {order}"));
        match (name, order) {
            ("mar", ModelOrder::Mar { r, s }) => mar_constraints(r, s),
            ("dar", ModelOrder::Dar { p, q }) => dar_constraints(p, q),
            _ => {
                let mut parts = name.split(':');
                if parts.next() != Some("jury") {
                    return Err(bad());
                }
                let r = parts
                    .next()
                    .and_then(|p| p.strip_prefix("r="))
                    .and_then(|v| v.parse::<usize>().ok())
                    .ok_or_else(bad)?;
                let side = match parts.next() {
                    Some("outside") | None => RootSide::Outside,
                    Some("inside") => RootSide::Inside,
                    _ => return Err(bad()),
                };
                if r > order.dim() {
                    return Err(bad());
                }
                Ok(jury_constraints(r, side)?.embed(0, order.dim()))
            }
        }
    }
}

/// Roots of Φ and of Ψ (each in its own variable) outside the unit circle.
pub fn mar_constraints(r: usize, s: usize) -> Result<ConstraintSet> {
    if r + s == 0 {
        return Err(Error::InvalidArgument("MAR needs r + s >= 1".into()));
    }
    let mut cs = ConstraintSet::new(Vec::new(), r + s);
    if r > 0 {
        cs = cs.union(jury_constraints(r, RootSide::Outside)?.embed(0, r + s))?;
    }
    if s > 0 {
        let lead = jury_constraints(s, RootSide::Outside)?.embed(r, r + s);
        let items = lead
            .items
            .into_iter()
            .map(|mut c| {
                c.label = c.label.replacen("jury", "jury-lead", 1);
                c
            })
            .collect();
        cs = cs.union(ConstraintSet::new(items, r + s))?;
    }
    Ok(cs)
}

/// ω ≥ 1e-8 and α_j ≥ 0; φ unrestricted.
pub fn dar_constraints(p: usize, q: usize) -> Result<ConstraintSet> {
    if p + q == 0 {
        return Err(Error::InvalidArgument("DAR needs p + q >= 1".into()));
    }
    let dim = p + 1 + q;
    let mut items = vec![Constraint::lower_bound("omega>=1e-8", p, STRICT_EPS)];
    items.extend((0..q).map(|j| Constraint::lower_bound(format!("alpha{}>=0", j + 1), p + 1 + j, 0.0)));
    Ok(ConstraintSet::new(items, dim))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mar_examples() {
        let cs = mar_constraints(1, 1).unwrap();
        assert!(cs.is_feasible(&[0.55, 0.83]));
        assert!(!cs.is_feasible(&[1.20, 1.80]));
        let ar2 = mar_constraints(2, 0).unwrap();
        assert!(ar2.is_feasible(&[0.5, 0.2]));
        assert!(!ar2.is_feasible(&[0.8, 0.4]));
        let mixed = mar_constraints(2, 3).unwrap();
        assert_eq!(mixed.dim(), 5);
        assert!(mixed.is_feasible(&[0.5, 0.2, 0.1, 0.1, 0.1]));
        assert!(!mixed.is_feasible(&[0.5, 0.2, 0.1, 0.1, 1.1]));
    }

    #[test]
    fn dar_examples() {
        let cs = dar_constraints(1, 1).unwrap();
        assert!(cs.is_feasible(&[0.5, 1.0, 0.4]));
        assert!(!cs.is_feasible(&[0.5, 0.0, 0.4]));
        assert!(!cs.is_feasible(&[0.5, 1.0, -0.01]));
        assert!((cs.max_violation(&[0.5, 1.0, -0.01]) - 0.01).abs() < 1e-15);
        assert_eq!(cs.items[1].as_lower_bound(), Some((2, 0.0)));
    }

    #[test]
    fn named_sets() {
        assert_eq!(ConstraintSet::by_name("mar", ModelOrder::mar(1, 1)).unwrap().dim(), 2);
        let j = ConstraintSet::by_name("jury:r=3:outside", ModelOrder::mar(3, 0)).unwrap();
        assert!(j.is_feasible(&[0.1, 0.1, 0.1]));
        assert!(ConstraintSet::by_name("dar", ModelOrder::mar(1, 0)).is_err());
        assert!(ConstraintSet::by_name("jury:r=4", ModelOrder::mar(3, 0)).is_err());
    }
}
