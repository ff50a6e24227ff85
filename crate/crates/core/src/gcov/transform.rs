//! Scalar transformations a(·) applied to residuals before the covariance
//! kernel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Transform {
    /// u ↦ u^k
    Power(u32),
    /// u ↦ |u|^k
    AbsPower(f64),
    /// u ↦ log(1 + u²)
    Log1pSq,
    /// u ↦ sign(u)·log(1 + |u|)
    SignedLog,
}

impl Transform {
    pub fn apply(&self, u: f64) -> f64 {
        match *self {
            Transform::Power(k) => u.powi(k as i32),
            Transform::AbsPower(k) => u.abs().powf(k),
            Transform::Log1pSq => (u * u).ln_1p(),
            Transform::SignedLog => u.signum() * u.abs().ln_1p(),
        }
    }

    /// a(cu) = c^k·a(u) for c > 0, so rescaling residuals only rescales the
    /// column.
    pub fn is_homogeneous(&self) -> bool {
        matches!(self, Transform::Power(_) | Transform::AbsPower(_))
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Power(k) => write!(f, "power:{k}"),
            Transform::AbsPower(k) => write!(f, "abs_power:{k}"),
            Transform::Log1pSq => f.write_str("log1p_sq"),
            Transform::SignedLog => f.write_str("signed_log"),
        }
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown transform {s:?}"));
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        match (name, arg) {
            ("power", Some(a)) => match a.parse::<u32>() {
                Ok(k) if k >= 1 => Ok(Transform::Power(k)),
                _ => Err(bad()),
            },
            ("abs_power", Some(a)) => match a.parse::<f64>() {
                Ok(k) if k > 0.0 && k.is_finite() => Ok(Transform::AbsPower(k)),
                _ => Err(bad()),
            },
            ("log1p_sq", None) => Ok(Transform::Log1pSq),
            ("signed_log", None) => Ok(Transform::SignedLog),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Transform {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Transform> for String {
    fn from(t: Transform) -> String {
        t.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Transform>", into = "Vec<Transform>")]
pub struct TransformSet(Vec<Transform>);

impl TransformSet {
    pub fn new(ts: Vec<Transform>) -> Result<Self> {
        if ts.is_empty() {
            return Err(Error::InvalidArgument("at least one transform is required".into()));
        }
        Ok(TransformSet(ts))
    }

    /// u, u², …, u^k.
    pub fn powers(k: u32) -> Self {
        TransformSet((1..=k.max(1)).map(Transform::Power).collect())
    }

    /// u and |u|: homogeneous, and less dominated by extremes than u² when
    /// the errors have no finite variance.
    pub fn heavy_tailed() -> Self {
        TransformSet(vec![Transform::Power(1), Transform::AbsPower(1.0)])
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[Transform] {
        &self.0
    }

    pub fn all_homogeneous(&self) -> bool {
        self.0.iter().all(Transform::is_homogeneous)
    }
}

impl Default for TransformSet {
    fn default() -> Self {
        TransformSet::powers(2)
    }
}

impl TryFrom<Vec<Transform>> for TransformSet {
    type Error = Error;
    fn try_from(v: Vec<Transform>) -> Result<Self> {
        TransformSet::new(v)
    }
}

impl From<TransformSet> for Vec<Transform> {
    fn from(t: TransformSet) -> Self {
        t.0
    }
}

impl FromStr for TransformSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TransformSet::new(s.split(',').map(str::parse).collect::<Result<_>>()?)
    }
}
