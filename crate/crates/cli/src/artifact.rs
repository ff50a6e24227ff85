//! Command outputs. Every artifact is written as `<name>.json` and a CSV
//! twin `<name>.csv` holding its table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub version: String,
}

impl Provenance {
    pub fn new(config: &Value, seed: Option<u64>) -> Self {
        Provenance { config_hash: config_hash(config), seed, version: env!("CARGO_PKG_VERSION").to_string() }
    }
}

/// serde_json keeps object keys sorted, so equal configurations hash
/// equally regardless of key order in the input file.
pub fn config_hash(config: &Value) -> String {
    let bytes = serde_json::to_vec(config).expect("JSON values serialize");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) if v.is_finite() => format!("{v}"),
            Cell::Num(v) => format!("{v}").to_lowercase(),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(v) => json!(v.to_string()),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
            Cell::Missing => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Missing, Into::into)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric cell of the first row whose `key` column equals `value`.
    pub fn lookup(&self, key: &str, value: &str, col: &str) -> Option<f64> {
        let (k, c) = (self.column(key)?, self.column(col)?);
        let row = self.rows.iter().find(|r| matches!(&r[k], Cell::Text(s) if s == value))?;
        match row[c] {
            Cell::Num(v) => Some(v),
            Cell::Int(i) => Some(i as f64),
            _ => None,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let m: serde_json::Map<String, Value> =
                    self.columns.iter().cloned().zip(r.iter().map(Cell::json)).collect();
                Value::Object(m)
            })
            .collect();
        json!({ "columns": self.columns, "rows": rows })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub provenance: Provenance,
    /// Full structured result.
    pub result: Value,
    pub table: Table,
    pub notes: Vec<String>,
}

impl Artifact {
    pub fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "provenance": self.provenance,
            "result": self.result,
            "table": self.table.to_json(),
            "notes": self.notes,
        })
    }

    /// Writes the JSON and CSV twins into `dir` and returns their paths.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let j = dir.join(format!("{}.json", self.name));
        let c = dir.join(format!("{}.csv", self.name));
        let mut text = serde_json::to_string_pretty(&self.to_json())?;
        text.push('\n');
        std::fs::write(&j, text).with_context(|| format!("cannot write {}", j.display()))?;
        std::fs::write(&c, self.table.to_csv()).with_context(|| format!("cannot write {}", c.display()))?;
        Ok((j, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"a":1,"b":{"c":2,"d":3}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"b":{"d":3,"c":2},"a":1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn csv_quoting_and_missing() {
        let mut t = Table::new(["k", "v", "w"]);
        t.push(vec!["a,b".into(), 0.5.into(), Cell::Missing]);
        t.push(vec!["x".into(), Cell::Num(f64::NAN), 3usize.into()]);
        assert_eq!(t.to_csv(), "k,v,w\n\"a,b\",0.5,\nx,nan,3\n");
        assert_eq!(t.lookup("k", "x", "w"), Some(3.0));
        assert_eq!(t.to_json()["rows"][1]["v"], json!("NaN"));
    }

    #[test]
    fn write_creates_twins() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(["x"]);
        t.push(vec![1.0.into()]);
        let a = Artifact {
            name: "demo".into(),
            provenance: Provenance::new(&json!({"k": 1}), Some(7)),
            result: json!({}),
            table: t,
            notes: vec![],
        };
        let (j, c) = a.write(dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(c).unwrap(), "x\n1\n");
        let v: Value = serde_json::from_str(&std::fs::read_to_string(j).unwrap()).unwrap();
        assert_eq!(v["provenance"]["seed"], json!(7));
    }
}
