//! Run configurations. Each command reads a JSON document whose unknown
//! fields are rejected before anything runs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gcov_core::timeseries::{detrend_linear, difference, load_csv, Column, Series};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocess {
    Log,
    /// Residuals of a regression on a constant and a time trend.
    Detrend,
    /// First difference.
    Difference,
}

/// A series read from one CSV column and optionally transformed, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Input {
    pub path: PathBuf,
    /// Header name or zero-based index; defaults to the last column.
    #[serde(default)]
    pub column: Option<String>,
    #[serde(default)]
    pub preprocess: Vec<Preprocess>,
}

impl Input {
    pub fn load(&self) -> Result<Series> {
        let column = match &self.column {
            Some(c) => Column::from(c.as_str()),
            None => Column::Index(last_column(&self.path)?),
        };
        let mut s = load_csv(&self.path, &column)?;
        for step in &self.preprocess {
            s = match step {
                Preprocess::Log => s.ln()?,
                Preprocess::Detrend => detrend_linear(&s)?,
                Preprocess::Difference => difference(&s, 1)?,
            };
        }
        Ok(s)
    }
}

fn last_column(path: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    Ok(first.split(',').count().saturating_sub(1))
}

/// Reads `path` (or `{}` when absent) and deserializes it strictly. The
/// returned value is the effective configuration used for hashing.
pub fn load<T: DeserializeOwned + Serialize>(path: Option<&Path>) -> Result<(T, Value)> {
    let raw: Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("config {} is not valid JSON", p.display()))?
        }
        None => Value::Object(Default::default()),
    };
    parse(raw)
}

pub fn parse<T: DeserializeOwned + Serialize>(raw: Value) -> Result<(T, Value)> {
    let cfg: T = serde_json::from_value(raw).context("config does not match the command schema")?;
    let effective = serde_json::to_value(&cfg)?;
    Ok((cfg, effective))
}

/// Every stochastic command needs a seed, from the flag or the config.
pub fn require_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64> {
    match (flag, config) {
        (Some(a), Some(b)) if a != b => bail!("--seed {a} conflicts with seed {b} in the config"),
        (Some(s), _) | (None, Some(s)) => Ok(s),
        (None, None) => bail!("this command is stochastic and needs --seed or a seed in the config"),
    }
}
