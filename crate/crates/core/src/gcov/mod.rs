//! The GCov objective and estimator.

mod info;
mod kernel;
mod transform;

pub use info::{
    estimate_i_blocks, estimate_j, omega_variants, sandwich, schur_complement, IBlocks, OmegaVariants, SimMode,
};
pub use kernel::{apply_transforms, autocorrelation_matrices, gamma_hat, trace_objective, TransformedPanel};
pub use transform::{Transform, TransformSet};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{poly_from_roots, ModelOrder, ModelSpec};
use crate::optim::{self, Minimum, OptimOptions};
use crate::rng;
use crate::timeseries::Series;

/// Dense matrix in row-major nested form, as serialized.
pub type Matrix = Vec<Vec<f64>>;

pub fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    let n = m.len();
    let c = m.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, c, |i, j| m[i][j])
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Treatment of the DAR intercept ω.
///
/// When every transform is homogeneous the objective depends on (ω, α)
/// only through α/ω, so ω is pinned at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DarScale {
    #[default]
    Auto,
    FixOmega,
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcovConfig {
    /// Number of lags H.
    pub h: usize,
    pub transforms: TransformSet,
    /// Starts drawn by [`default_starts`], the neutral start included.
    pub n_starts: usize,
    /// Box for random starts, one interval per parameter. Defaults depend on
    /// the model family.
    pub start_box: Option<Vec<(f64, f64)>>,
    pub optim: OptimOptions,
    pub dar_scale: DarScale,
}

impl Default for GcovConfig {
    fn default() -> Self {
        GcovConfig {
            h: 3,
            transforms: TransformSet::default(),
            n_starts: 20,
            start_box: None,
            optim: OptimOptions::default(),
            dar_scale: DarScale::Auto,
        }
    }
}

impl GcovConfig {
    pub fn new(h: usize, transforms: TransformSet) -> Self {
        GcovConfig { h, transforms, ..Default::default() }
    }

    pub fn with_starts(mut self, n: usize) -> Self {
        self.n_starts = n;
        self
    }

    pub fn k(&self) -> usize {
        self.transforms.k()
    }

    pub fn fixes_omega(&self) -> bool {
        match self.dar_scale {
            DarScale::Auto => self.transforms.all_homogeneous(),
            DarScale::FixOmega => true,
            DarScale::Free => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.h == 0 {
            return Err(Error::InvalidArgument("H must be at least 1".into()));
        }
        if self.n_starts == 0 {
            return Err(Error::InvalidArgument("at least one start is required".into()));
        }
        Ok(())
    }
}

/// Split of θ into optimized coordinates and pinned ones.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Param {
    pub order: ModelOrder,
    pub free: Vec<usize>,
    omega: Option<usize>,
}

impl Param {
    pub fn new(order: ModelOrder, cfg: &GcovConfig) -> Self {
        let omega = match order {
            ModelOrder::Dar { p, .. } if cfg.fixes_omega() => Some(p),
            _ => None,
        };
        let free = (0..order.dim()).filter(|&i| Some(i) != omega).collect();
        Param { order, free, omega }
    }

    pub fn embed(&self, z: &[f64]) -> Vec<f64> {
        let mut th = vec![0.0; self.order.dim()];
        for (&i, &v) in self.free.iter().zip(z) {
            th[i] = v;
        }
        if let Some(w) = self.omega {
            th[w] = 1.0;
        }
        th
    }

    /// Free coordinates of θ, after moving θ to the ω = 1 normalization
    /// when ω is pinned.
    pub fn project(&self, theta: &[f64]) -> Vec<f64> {
        let th = self.normalize(theta);
        self.free.iter().map(|&i| th[i]).collect()
    }

    pub fn normalize(&self, theta: &[f64]) -> Vec<f64> {
        let mut th = theta.to_vec();
        if let (Some(w), ModelOrder::Dar { .. }) = (self.omega, self.order) {
            let om = th[w];
            if om > 0.0 && om.is_finite() {
                for v in &mut th[w + 1..] {
                    *v /= om;
                }
            }
            th[w] = 1.0;
        }
        th
    }
}

/// L_T(θ) on a fixed sample.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    y: &'a [f64],
    order: ModelOrder,
    cfg: &'a GcovConfig,
}

impl<'a> Objective<'a> {
    pub fn new(y: &'a [f64], order: ModelOrder, cfg: &'a GcovConfig) -> Result<Self> {
        cfg.validate()?;
        let t_e = y.len().saturating_sub(order.lost());
        if t_e <= cfg.h + 1 {
            return Err(Error::TooShort { needed: order.lost() + cfg.h + 2, got: y.len() });
        }
        Ok(Objective { y, order, cfg })
    }

    /// Effective sample length T_e after the residual map.
    pub fn t_eff(&self) -> usize {
        self.y.len() - self.order.lost()
    }

    pub fn order(&self) -> ModelOrder {
        self.order
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        let u = self.order.residuals(self.y, theta)?;
        let p = apply_transforms(&u, &self.cfg.transforms)?;
        trace_objective(&p, self.cfg.h)
    }

    /// Objective as a plain function, +∞ where undefined.
    pub fn value_or_inf(&self, theta: &[f64]) -> f64 {
        self.value(theta).unwrap_or(f64::INFINITY)
    }
}

/// L_T for a fully specified model.
pub fn objective(y: &Series, model: &ModelSpec, cfg: &GcovConfig) -> Result<f64> {
    Objective::new(y.values(), model.order(), cfg)?.value(&model.theta())
}

/// Central-difference gradient with steps 1e-5·max(1, |θ_i|).
pub fn numerical_gradient<F: Fn(&[f64]) -> f64>(f: F, theta: &[f64]) -> Result<Vec<f64>> {
    optim::gradient(&f, theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub order: ModelOrder,
    pub param_names: Vec<String>,
    pub theta_hat: Vec<f64>,
    /// Indices of θ that were optimized; the others are pinned.
    pub free: Vec<usize>,
    pub objective: f64,
    /// Sample length after the residual map.
    pub t_eff: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub n_starts_used: usize,
    pub best_start: usize,
    pub start_objectives: Vec<f64>,
    pub h: usize,
    pub transforms: TransformSet,
    /// Hessian of L_T over the free coordinates.
    pub j: Option<Matrix>,
    pub i: Option<Matrix>,
    pub omega: Option<Matrix>,
    /// Standard errors of the free coordinates.
    pub se: Option<Vec<f64>>,
}

impl EstimationResult {
    pub fn spec(&self) -> Result<ModelSpec> {
        self.order.spec(&self.theta_hat)
    }

    /// Free coordinates of θ̂.
    pub fn beta_hat(&self) -> Vec<f64> {
        self.free.iter().map(|&i| self.theta_hat[i]).collect()
    }

    pub fn residuals(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.order.residuals(y, &self.theta_hat)
    }
}

/// Neutral start for a model family.
pub fn neutral_start(order: ModelOrder) -> Vec<f64> {
    match order {
        ModelOrder::Mar { r, s } => vec![0.0; r + s],
        ModelOrder::Dar { p, q } => {
            let mut v = vec![0.0; p];
            v.push(1.0);
            v.extend(std::iter::repeat_n(0.1, q));
            v
        }
    }
}

fn default_box(order: ModelOrder) -> Vec<(f64, f64)> {
    match order {
        ModelOrder::Mar { r, s } => vec![(-1.0, 1.0); r + s],
        ModelOrder::Dar { p, q } => {
            let mut b = vec![(-1.0, 1.0); p];
            b.push((0.2, 2.0));
            b.extend(std::iter::repeat_n((0.0, 1.0), q));
            b
        }
    }
}

/// Inverse roots for a random start: moduli in [0.2, 0.95], real or in
/// conjugate pairs, each flipped outside the unit circle with probability
/// one half so that root-flipped minima are reachable.
fn random_root_poly<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut roots = Vec::with_capacity(n);
    while roots.len() < n {
        let m: f64 = rng.random_range(0.2..0.95);
        let m = if rng.random_bool(0.5) { 1.0 / m } else { m };
        if n - roots.len() >= 2 && rng.random_bool(0.3) {
            let z = Complex64::from_polar(m, rng.random_range(0.2..2.9));
            roots.push(z);
            roots.push(z.conj());
        } else {
            roots.push(Complex64::new(if rng.random_bool(0.5) { m } else { -m }, 0.0));
        }
    }
    poly_from_roots(&roots).expect("conjugate-closed roots")
}

/// `cfg.n_starts` starts beginning with the neutral one. With a start box
/// the rest are uniform draws from it. Otherwise MAR starts continue with
/// positive real root sets flipped 0..=r (lags) and 0..=s (leads) times,
/// then random root-space draws; DAR starts are uniform over a default box.
pub fn default_starts(order: ModelOrder, cfg: &GcovConfig, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut r = rng::rng(seed);
    let mut out = vec![neutral_start(order)];
    if let (ModelOrder::Mar { r: lags, s: leads }, None) = (order, &cfg.start_box) {
        // Positive real roots with k of them flipped, for every k per side.
        let structured = |n: usize, k: usize| {
            let roots: Vec<Complex64> = (0..n)
                .map(|j| {
                    let m = [0.6, 0.4, 0.5, 0.3, 0.45][j % 5];
                    Complex64::new(if j < k { 1.0 / m } else { m }, 0.0)
                })
                .collect();
            poly_from_roots(&roots).expect("real roots")
        };
        for kr in 0..=lags {
            for ks in 0..=leads {
                if out.len() < cfg.n_starts {
                    let mut v = structured(lags, kr);
                    v.extend(structured(leads, ks));
                    out.push(v);
                }
            }
        }
        while out.len() < cfg.n_starts {
            let mut v = random_root_poly(lags, &mut r);
            v.extend(random_root_poly(leads, &mut r));
            out.push(v);
        }
        return Ok(out);
    }
    let bx = cfg.start_box.clone().unwrap_or_else(|| default_box(order));
    if bx.len() != order.dim() || bx.iter().any(|(a, b)| !(a <= b)) {
        return Err(Error::Dimension(format!("start box must hold {} ordered intervals", order.dim())));
    }
    for _ in 1..cfg.n_starts {
        out.push(bx.iter().map(|&(a, b)| if a == b { a } else { r.random_range(a..b) }).collect());
    }
    Ok(out)
}

/// Least-squares coefficients of `rows` on `target`.
fn least_squares(rows: &[Vec<f64>], target: &[f64]) -> Option<Vec<f64>> {
    let n = rows.first()?.len();
    let x = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let y = nalgebra::DVector::from_column_slice(target);
    let b = x.clone().svd(true, true).solve(&y, 1e-12).ok()?;
    b.iter().all(|v| v.is_finite()).then(|| b.iter().copied().collect())
}

/// DAR(p,q) start from two regressions: OLS of y_t on its p lags, then
/// the squared OLS residual on (1, y²_{t-1}, ..., y²_{t-q}). Negative
/// variance coefficients are clipped; with a pinned ω the start is scaled
/// to ω = 1. MAR templates get the neutral start.
pub fn moment_start(y: &[f64], order: ModelOrder, cfg: &GcovConfig) -> Result<Vec<f64>> {
    let ModelOrder::Dar { p, q } = order else {
        return Ok(neutral_start(order));
    };
    let m = p.max(q);
    if y.len() < m + 2 * (p + q) + 3 {
        return Err(Error::TooShort { needed: m + 2 * (p + q) + 3, got: y.len() });
    }
    let ts: Vec<usize> = (m..y.len()).collect();
    let phi = if p == 0 {
        Vec::new()
    } else {
        let rows: Vec<Vec<f64>> = ts.iter().map(|&t| (1..=p).map(|j| y[t - j]).collect()).collect();
        let target: Vec<f64> = ts.iter().map(|&t| y[t]).collect();
        least_squares(&rows, &target).ok_or_else(|| Error::Singular("lagged design for the DAR start".into()))?
    };
    let e2: Vec<f64> = ts.iter().map(|&t| (y[t] - (1..=p).map(|j| phi[j - 1] * y[t - j]).sum::<f64>()).powi(2)).collect();
    let rows: Vec<Vec<f64>> = ts.iter().map(|&t| std::iter::once(1.0).chain((1..=q).map(|j| y[t - j].powi(2))).collect()).collect();
    let mean_e2 = e2.iter().sum::<f64>() / e2.len() as f64;
    let (mut omega, mut alpha) = match least_squares(&rows, &e2) {
        Some(b) => (b[0], b[1..].to_vec()),
        None => (mean_e2, vec![0.0; q]),
    };
    if !(omega > 0.0) {
        omega = 0.1 * mean_e2.max(f64::MIN_POSITIVE);
    }
    for a in &mut alpha {
        *a = a.max(0.01 * omega);
    }
    let scale = if cfg.fixes_omega() { 1.0 / omega } else { 1.0 };
    let mut v = phi;
    v.push(omega * scale);
    v.extend(alpha.iter().map(|a| a * scale));
    Ok(v)
}

/// Starts for fitting `order` to `y`. DAR objectives decrease without bound
/// along α/ω → ∞ in many samples, so without a start box DAR is fitted
/// locally from [`moment_start`]; everything else uses [`default_starts`].
pub fn data_starts(y: &[f64], order: ModelOrder, cfg: &GcovConfig, seed: u64) -> Result<Vec<Vec<f64>>> {
    match (order, &cfg.start_box) {
        (ModelOrder::Dar { .. }, None) => Ok(vec![moment_start(y, order, cfg)?]),
        _ => default_starts(order, cfg, seed),
    }
}

pub(crate) struct Fit {
    pub theta: Vec<f64>,
    pub min: Minimum,
    pub best_index: usize,
    pub per_start: Vec<f64>,
}

/// Multistart minimization of L_T over the free coordinates.
pub(crate) fn fit(obj: &Objective<'_>, param: &Param, starts: &[Vec<f64>], opts: &OptimOptions) -> Result<Fit> {
    if starts.is_empty() {
        return Err(Error::InvalidArgument("no start vectors supplied".into()));
    }
    for s in starts {
        if s.len() != param.order.dim() {
            return Err(Error::Dimension(format!(
                "start of length {} for {} parameters",
                s.len(),
                param.order.dim()
            )));
        }
    }
    let f = |z: &[f64]| obj.value_or_inf(&param.embed(z));
    let zs: Vec<Vec<f64>> = starts.iter().map(|s| param.project(s)).collect();
    let m = optim::multistart(&f, &zs, opts).map_err(|e| match e {
        Error::Optimization(msg) => Error::Optimization(format!("{} for {}", msg, param.order)),
        other => other,
    })?;
    Ok(Fit {
        theta: param.embed(&m.best.x),
        per_start: m.per_start.iter().map(|r| r.f).collect(),
        best_index: m.best_index,
        min: m.best,
    })
}

/// Unconstrained GCov estimate from the supplied starts; J is the Hessian
/// of L_T at θ̂ over the free coordinates.
pub fn gcov_estimate(y: &Series, order: ModelOrder, cfg: &GcovConfig, init: &[Vec<f64>]) -> Result<EstimationResult> {
    gcov_estimate_raw(y.values(), order, cfg, init, true)
}

pub(crate) fn gcov_estimate_raw(
    y: &[f64],
    order: ModelOrder,
    cfg: &GcovConfig,
    init: &[Vec<f64>],
    with_j: bool,
) -> Result<EstimationResult> {
    let obj = Objective::new(y, order, cfg)?;
    let param = Param::new(order, cfg);
    let fit = fit(&obj, &param, init, &cfg.optim)?;
    let j = if with_j { Some(from_dmatrix(&estimate_j(y, order, &fit.theta, cfg)?)) } else { None };
    Ok(EstimationResult {
        order,
        param_names: order.param_names(),
        free: param.free.clone(),
        objective: fit.min.f,
        t_eff: obj.t_eff(),
        converged: fit.min.converged,
        grad_norm: fit.min.grad_norm,
        n_starts_used: init.len(),
        best_start: fit.best_index,
        start_objectives: fit.per_start,
        h: cfg.h,
        transforms: cfg.transforms.clone(),
        theta_hat: fit.theta,
        j,
        i: None,
        omega: None,
        se: None,
    })
}
