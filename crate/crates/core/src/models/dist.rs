use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::timeseries::Series;

/// Shape of the innovation distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistKind {
    StudentT { nu: f64 },
    Cauchy,
    Gaussian,
}

/// Innovation law used by the simulators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorDist {
    #[serde(flatten)]
    pub kind: DistKind,
    #[serde(default = "unit")]
    pub scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl ErrorDist {
    pub fn new(kind: DistKind, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
        }
        if let DistKind::StudentT { nu } = kind {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(Error::InvalidArgument(format!("degrees of freedom must be positive, got {nu}")));
            }
        }
        Ok(Self { kind, scale })
    }

    pub fn student_t(nu: f64) -> Self {
        Self::new(DistKind::StudentT { nu }, 1.0).expect("valid degrees of freedom")
    }

    pub fn cauchy() -> Self {
        Self { kind: DistKind::Cauchy, scale: 1.0 }
    }

    pub fn gaussian() -> Self {
        Self { kind: DistKind::Gaussian, scale: 1.0 }
    }

    /// Parse "gaussian", "cauchy", "t5" / "t(5)" / "student_t:5".
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "gaussian" | "normal" => return Ok(Self::gaussian()),
            "cauchy" => return Ok(Self::cauchy()),
            _ => {}
        }
        let digits = t
            .trim_start_matches("student_t:")
            .trim_start_matches("student_t")
            .trim_start_matches('t')
            .trim_start_matches('(')
            .trim_end_matches(')');
        digits
            .parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("unknown error distribution {s:?}")))
            .and_then(|nu| Self::new(DistKind::StudentT { nu }, 1.0))
    }

    /// One draw; Cauchy shares the Student-t sampler with one degree of freedom.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z = match self.kind {
            DistKind::Gaussian => rng.sample::<f64, _>(StandardNormal),
            DistKind::Cauchy => student(1.0).sample(rng),
            DistKind::StudentT { nu } => student(nu).sample(rng),
        };
        self.scale * z
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        match self.kind {
            DistKind::Gaussian => (0..n).map(|_| self.scale * rng.sample::<f64, _>(StandardNormal)).collect(),
            DistKind::Cauchy | DistKind::StudentT { .. } => {
                let nu = match self.kind {
                    DistKind::StudentT { nu } => nu,
                    _ => 1.0,
                };
                let d = student(nu);
                (0..n).map(|_| self.scale * d.sample(rng)).collect()
            }
        }
    }
}

fn student(nu: f64) -> StudentT<f64> {
    StudentT::new(nu).expect("validated degrees of freedom")
}

/// `n` i.i.d. draws, deterministic in `seed`.
pub fn draw_errors(dist: &ErrorDist, n: usize, seed: u64) -> Result<Series> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one draw".into()));
    }
    let mut r = rng::rng(seed);
    Series::new(dist.sample_n(&mut r, n), "errors")
}
