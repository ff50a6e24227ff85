//! Parametric residual maps, simulators and error laws.

mod dar;
mod dist;
mod mar;
mod poly;

pub use dar::{dar_residuals, dar_simulate, dar_stationarity_diagnostic};
pub use dist::{draw_errors, DistKind, ErrorDist};
pub use mar::{mar_residuals, mar_simulate, mar_simulate_unchecked};
pub use poly::{poly_from_roots, roots_from_poly, RootSet, Side};

pub(crate) use dar::{dar_filter, dar_residuals_into};
pub(crate) use mar::{mar_filter, mar_residuals_into};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::Series;

pub const MAR_BURN: usize = 200;
pub const DAR_BURN: usize = 500;

/// Φ(L)Ψ(L⁻¹)y_t = ε_t with Φ(z) = 1 - φ₁z - … - φ_r z^r and
/// Ψ(z) = 1 - ψ₁z - … - ψ_s z^s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarWire", into = "MarWire")]
pub struct MarSpec {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MarWire {
    r: usize,
    s: usize,
    phi: Vec<f64>,
    psi: Vec<f64>,
}

impl TryFrom<MarWire> for MarSpec {
    type Error = Error;
    fn try_from(w: MarWire) -> Result<Self> {
        if w.phi.len() != w.r || w.psi.len() != w.s {
            return Err(Error::Dimension(format!(
                "MAR({},{}) given {} lag and {} lead coefficients",
                w.r,
                w.s,
                w.phi.len(),
                w.psi.len()
            )));
        }
        MarSpec::new(w.phi, w.psi)
    }
}

impl From<MarSpec> for MarWire {
    fn from(m: MarSpec) -> Self {
        MarWire { r: m.r(), s: m.s(), phi: m.phi, psi: m.psi }
    }
}

impl MarSpec {
    pub fn new(phi: Vec<f64>, psi: Vec<f64>) -> Result<Self> {
        if phi.is_empty() && psi.is_empty() {
            return Err(Error::InvalidArgument("MAR needs r + s >= 1".into()));
        }
        if phi.iter().chain(&psi).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite MAR coefficient".into()));
        }
        Ok(MarSpec { phi, psi })
    }

    pub fn r(&self) -> usize {
        self.phi.len()
    }

    pub fn s(&self) -> usize {
        self.psi.len()
    }

    /// (φ, ψ) stacked.
    pub fn theta(&self) -> Vec<f64> {
        self.phi.iter().chain(&self.psi).copied().collect()
    }

    pub fn lag_roots(&self) -> Option<RootSet> {
        (!self.phi.is_empty()).then(|| roots_from_poly(&self.phi, Side::Lag).ok()).flatten()
    }

    pub fn lead_roots(&self) -> Option<RootSet> {
        (!self.psi.is_empty()).then(|| roots_from_poly(&self.psi, Side::Lead).ok()).flatten()
    }

    /// Both polynomials have all their roots strictly outside the unit circle.
    pub fn is_feasible(&self) -> bool {
        let side_ok = |c: &[f64], side| {
            c.is_empty() || roots_from_poly(c, side).map(|r| r.all_outside(0.0)).unwrap_or(false)
        };
        side_ok(&self.phi, Side::Lag) && side_ok(&self.psi, Side::Lead)
    }
}

/// y_t = Σφ_i y_{t-i} + η_t √(ω + Σα_j y²_{t-j}).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DarWire", into = "DarWire")]
pub struct DarSpec {
    pub phi: Vec<f64>,
    pub omega: f64,
    pub alpha: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DarWire {
    p: usize,
    q: usize,
    phi: Vec<f64>,
    omega: f64,
    alpha: Vec<f64>,
}

impl TryFrom<DarWire> for DarSpec {
    type Error = Error;
    fn try_from(w: DarWire) -> Result<Self> {
        if w.phi.len() != w.p || w.alpha.len() != w.q {
            return Err(Error::Dimension(format!(
                "DAR({},{}) given {} mean and {} volatility coefficients",
                w.p,
                w.q,
                w.phi.len(),
                w.alpha.len()
            )));
        }
        DarSpec::new(w.phi, w.omega, w.alpha)
    }
}

impl From<DarSpec> for DarWire {
    fn from(d: DarSpec) -> Self {
        DarWire { p: d.p(), q: d.q(), phi: d.phi, omega: d.omega, alpha: d.alpha }
    }
}

impl DarSpec {
    pub fn new(phi: Vec<f64>, omega: f64, alpha: Vec<f64>) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::InvalidArgument(format!("DAR omega must be positive, got {omega}")));
        }
        if alpha.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::InvalidArgument("DAR alpha must be nonnegative".into()));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite DAR coefficient".into()));
        }
        Ok(DarSpec { phi, omega, alpha })
    }

    pub fn p(&self) -> usize {
        self.phi.len()
    }

    pub fn q(&self) -> usize {
        self.alpha.len()
    }

    pub fn max_lag(&self) -> usize {
        self.p().max(self.q())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Mar(MarSpec),
    Dar(DarSpec),
}

impl ModelSpec {
    pub fn order(&self) -> ModelOrder {
        match self {
            ModelSpec::Mar(m) => ModelOrder::Mar { r: m.r(), s: m.s() },
            ModelSpec::Dar(d) => ModelOrder::Dar { p: d.p(), q: d.q() },
        }
    }

    /// Parameter vector in the layout of [`ModelOrder`].
    pub fn theta(&self) -> Vec<f64> {
        match self {
            ModelSpec::Mar(m) => m.phi.iter().chain(&m.psi).copied().collect(),
            ModelSpec::Dar(d) => {
                let mut v = d.phi.clone();
                v.push(d.omega);
                v.extend(&d.alpha);
                v
            }
        }
    }

    pub fn residuals(&self, y: &Series) -> Result<Series> {
        match self {
            ModelSpec::Mar(m) => mar_residuals(y, m),
            ModelSpec::Dar(d) => dar_residuals(y, d),
        }
    }

    /// Simulate with the model's default burn-in.
    pub fn simulate(&self, dist: &ErrorDist, t: usize, seed: u64) -> Result<(Series, Series)> {
        match self {
            ModelSpec::Mar(m) => mar_simulate(m, dist, t, seed, MAR_BURN),
            ModelSpec::Dar(d) => dar_simulate(d, dist, t, seed, DAR_BURN),
        }
    }

    pub fn is_feasible(&self) -> bool {
        match self {
            ModelSpec::Mar(m) => m.is_feasible(),
            ModelSpec::Dar(_) => true,
        }
    }
}

/// Model family and orders; fixes the layout of parameter vectors:
/// MAR θ = (φ₁..φ_r, ψ₁..ψ_s), DAR θ = (φ₁..φ_p, ω, α₁..α_q).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelOrder {
    Mar { r: usize, s: usize },
    Dar { p: usize, q: usize },
}

impl std::fmt::Display for ModelOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelOrder::Mar { r, s } => write!(f, "MAR({r},{s})"),
            ModelOrder::Dar { p, q } => write!(f, "DAR({p},{q})"),
        }
    }
}

impl ModelOrder {
    pub fn mar(r: usize, s: usize) -> Self {
        ModelOrder::Mar { r, s }
    }

    pub fn dar(p: usize, q: usize) -> Self {
        ModelOrder::Dar { p, q }
    }

    pub fn dim(&self) -> usize {
        match *self {
            ModelOrder::Mar { r, s } => r + s,
            ModelOrder::Dar { p, q } => p + 1 + q,
        }
    }

    /// Observations lost at the edges by the residual map.
    pub fn lost(&self) -> usize {
        match *self {
            ModelOrder::Mar { r, s } => r + s,
            ModelOrder::Dar { p, q } => p.max(q),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match *self {
            ModelOrder::Mar { r, s } => (1..=r)
                .map(|i| format!("phi{i}"))
                .chain((1..=s).map(|j| format!("psi{j}")))
                .collect(),
            ModelOrder::Dar { p, q } => (1..=p)
                .map(|i| format!("phi{i}"))
                .chain(std::iter::once("omega".to_string()))
                .chain((1..=q).map(|j| format!("alpha{j}")))
                .collect(),
        }
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "{self} expects {} parameters, got {}",
                self.dim(),
                theta.len()
            )));
        }
        Ok(())
    }

    /// Build a validated spec from θ.
    pub fn spec(&self, theta: &[f64]) -> Result<ModelSpec> {
        self.check(theta)?;
        Ok(match *self {
            ModelOrder::Mar { r, .. } => ModelSpec::Mar(MarSpec::new(theta[..r].to_vec(), theta[r..].to_vec())?),
            ModelOrder::Dar { p, .. } => {
                ModelSpec::Dar(DarSpec::new(theta[..p].to_vec(), theta[p], theta[p + 1..].to_vec())?)
            }
        })
    }

    /// Residual map g(y; θ) into `out`. No sign restrictions are imposed on
    /// θ; the DAR map fails only when a conditional variance is not positive.
    pub fn residuals_into(&self, y: &[f64], theta: &[f64], out: &mut Vec<f64>) -> Result<()> {
        self.check(theta)?;
        match *self {
            ModelOrder::Mar { r, .. } => mar_residuals_into(y, &theta[..r], &theta[r..], out),
            ModelOrder::Dar { p, .. } => dar_residuals_into(y, &theta[..p], theta[p], &theta[p + 1..], out),
        }
    }

    pub fn residuals(&self, y: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        self.residuals_into(y, theta, &mut out)?;
        Ok(out)
    }

    /// Burn-in used when regenerating series of this family.
    pub fn default_burn(&self) -> usize {
        match self {
            ModelOrder::Mar { .. } => MAR_BURN,
            ModelOrder::Dar { .. } => DAR_BURN,
        }
    }

    /// Number of errors consumed by [`ModelOrder::regenerate`] for a series of length `t`.
    pub fn errors_needed(&self, t: usize) -> usize {
        match self {
            ModelOrder::Mar { .. } => t + 2 * MAR_BURN,
            ModelOrder::Dar { .. } => t + DAR_BURN,
        }
    }

    /// Inverse map y = g⁻¹(θ, ε) with default burn-in; `errors` must have
    /// length [`ModelOrder::errors_needed`]`(t)`.
    pub fn regenerate(&self, theta: &[f64], errors: &[f64], t: usize) -> Result<Vec<f64>> {
        self.check(theta)?;
        if errors.len() != self.errors_needed(t) {
            return Err(Error::Dimension(format!(
                "regeneration of {t} points needs {} errors, got {}",
                self.errors_needed(t),
                errors.len()
            )));
        }
        let y = match *self {
            ModelOrder::Mar { r, .. } => mar_filter(&theta[..r], &theta[r..], errors, MAR_BURN)?,
            ModelOrder::Dar { p, .. } => dar_filter(&theta[..p], theta[p], &theta[p + 1..], errors, DAR_BURN)?,
        };
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(y)
    }

    /// Simulate T points at θ with errors from `dist`.
    pub fn simulate_with<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        dist: &ErrorDist,
        t: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let e = dist.sample_n(rng, self.errors_needed(t));
        self.regenerate(theta, &e, t)
    }
}
