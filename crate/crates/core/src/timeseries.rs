//! Univariate series container, CSV ingestion and the preprocessing steps
//! used by the empirical pipelines (linear detrending, differencing, sample
//! autocorrelations).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An observed univariate time series.
///
/// Values are finite and non-empty; `t0_index` records the position of the
/// first value in the source data (after trimming by residual maps or
/// differencing it moves forward).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    values: Vec<f64>,
    pub label: String,
    pub t0_index: i64,
}

impl Series {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        Self::with_origin(values, label, 0)
    }

    pub fn with_origin(values: Vec<f64>, label: impl Into<String>, t0_index: i64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            values,
            label: label.into(),
            t0_index,
        })
    }

    /// Unlabelled series; convenient in tests and simulations.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        Self::new(values, "")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Elementwise natural logarithm; fails on non-positive entries.
    pub fn ln(&self) -> Result<Series> {
        let v: Vec<f64> = self.values.iter().map(|x| x.ln()).collect();
        Series::with_origin(v, format!("log({})", self.label), self.t0_index)
    }

    /// Write as a single-column CSV with the label as header.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let header = if self.label.is_empty() { "value" } else { &self.label };
        w.write_record([header])?;
        for v in &self.values {
            w.write_record([format_float(*v)])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(())
    }
}

/// Shortest round-trip representation of a float.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Column selector for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Column {
    Name(String),
    Index(usize),
}

impl From<&str> for Column {
    fn from(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.to_string()),
        }
    }
}

/// Read one column of a comma-separated file.
///
/// The header row is optional: a first row whose selected cell does not
/// parse as a number is treated as the header. Selecting by name requires
/// a header. Parse errors report the 1-based line number in the file.
pub fn load_csv(path: impl AsRef<Path>, column: &Column) -> Result<Series> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let mut label = match column {
        Column::Name(n) => n.clone(),
        Column::Index(i) => format!("column{i}"),
    };
    let mut skip = 0;
    let index = match (column, records.first()) {
        (Column::Name(name), first) => {
            let pos = first
                .and_then(|r| r.iter().position(|c| c == name))
                .ok_or_else(|| Error::MissingColumn(name.clone()))?;
            skip = 1;
            pos
        }
        (Column::Index(i), Some(first)) => {
            if let Some(cell) = first.get(*i) {
                if cell.parse::<f64>().is_err() {
                    label = cell.to_string();
                    skip = 1;
                }
            }
            *i
        }
        (Column::Index(i), None) => *i,
    };

    let mut values = Vec::new();
    for (line, rec) in records.iter().enumerate().skip(skip) {
        let row = line + 1;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let cell = rec
            .get(index)
            .ok_or_else(|| Error::MissingColumn(format!("{index} (row {row})")))?;
        let v: f64 = cell.parse().map_err(|_| Error::Parse {
            row,
            value: cell.to_string(),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                row,
                value: cell.to_string(),
            });
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::Empty);
    }
    Series::new(values, label)
}

/// Residuals of the least-squares regression of the series on a constant
/// and a time trend t = 1..T.
pub fn detrend_linear(s: &Series) -> Result<Series> {
    let n = s.len();
    if n < 3 {
        return Err(Error::TooShort { needed: 3, got: n });
    }
    let tbar = (n as f64 + 1.0) / 2.0;
    let xbar = s.mean();
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (i, &x) in s.values().iter().enumerate() {
        let dt = (i + 1) as f64 - tbar;
        sxx += dt * dt;
        sxy += dt * (x - xbar);
    }
    let slope = sxy / sxx;
    let resid = s
        .values()
        .iter()
        .enumerate()
        .map(|(i, &x)| x - xbar - slope * ((i + 1) as f64 - tbar))
        .collect();
    Series::with_origin(resid, format!("detrended({})", s.label), s.t0_index)
}

/// `d`-th order difference; the output has length `T - d`.
pub fn difference(s: &Series, d: usize) -> Result<Series> {
    if d == 0 {
        return Err(Error::InvalidArgument("difference order must be positive".into()));
    }
    if s.len() <= d {
        return Err(Error::TooShort {
            needed: d + 1,
            got: s.len(),
        });
    }
    let mut v = s.values().to_vec();
    for _ in 0..d {
        v = v.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Series::with_origin(v, format!("diff{d}({})", s.label), s.t0_index + d as i64)
}

/// Sample autocorrelations at lags `1..=max_lag` of the demeaned series,
/// with autocovariances normalized by T.
pub fn acf(s: &Series, max_lag: usize) -> Result<Vec<f64>> {
    acf_values(s.values(), max_lag)
}

pub(crate) fn acf_values(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if max_lag == 0 {
        return Err(Error::InvalidArgument("max_lag must be positive".into()));
    }
    if max_lag >= n {
        return Err(Error::TooShort {
            needed: max_lag + 1,
            got: n,
        });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let g0: f64 = d.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if g0 <= 1e-24 * mean.abs().max(1.0).powi(2) {
        return Err(Error::ZeroVariance);
    }
    Ok((1..=max_lag)
        .map(|h| {
            let gh: f64 = (h..n).map(|t| d[t] * d[t - h]).sum::<f64>() / n as f64;
            (gh / g0).clamp(-1.0, 1.0)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn series(v: &[f64]) -> Series {
        Series::from_vec(v.to_vec()).unwrap()
    }

    fn csv_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_headerless_column() {
        let f = csv_file("2.0\n4.0\n6.0\n");
        let s = load_csv(f.path(), &Column::Index(0)).unwrap();
        assert_eq!(s.values(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn load_with_header_single_row() {
        let f = csv_file("value\n1.5\n");
        let s = load_csv(f.path(), &Column::Name("value".into())).unwrap();
        assert_eq!(s.values(), &[1.5]);
        assert_eq!(s.label, "value");
        let s = load_csv(f.path(), &Column::Index(0)).unwrap();
        assert_eq!(s.values(), &[1.5]);
    }

    #[test]
    fn load_reports_bad_row() {
        let f = csv_file("value\n1\n2\n3\n4\n5\nabc\n8\n");
        match load_csv(f.path(), &Column::Name("value".into())) {
            Err(Error::Parse { row, value }) => {
                assert_eq!(row, 7);
                assert_eq!(value, "abc");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            load_csv("/nonexistent/file.csv", &Column::Index(0)),
            Err(Error::Io { .. })
        ));
        let f = csv_file("value\n");
        assert!(matches!(load_csv(f.path(), &Column::Index(0)), Err(Error::Empty)));
        let f = csv_file("date,value\n2020-01,1.0\n2020-02,2.0\n");
        let s = load_csv(f.path(), &Column::Name("value".into())).unwrap();
        assert_eq!(s.values(), &[1.0, 2.0]);
        assert!(matches!(
            load_csv(f.path(), &Column::Name("missing".into())),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let s = Series::new(vec![0.1, -2.5, 1e-12], "x").unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        s.write_csv(f.path()).unwrap();
        let back = load_csv(f.path(), &Column::Name("x".into())).unwrap();
        assert_eq!(back.values(), s.values());
    }

    #[test]
    fn detrend_examples() {
        let r = detrend_linear(&series(&[2.0, 4.0, 6.0, 8.0])).unwrap();
        assert!(r.values().iter().all(|v| v.abs() < 1e-12));
        let r = detrend_linear(&series(&[1.0, 1.0, 1.0])).unwrap();
        assert!(r.values().iter().all(|v| v.abs() < 1e-12));
        assert!(detrend_linear(&series(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn detrend_matches_normal_equations() {
        // Oracle: solve [n, Σt; Σt, Σt²][a; b] = [Σx; Σtx] directly.
        let x = [0.0, 1.0, 0.0, 1.0];
        let n = 4.0;
        let (st, stt) = (10.0, 30.0);
        let sx: f64 = x.iter().sum();
        let stx: f64 = x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
        let det = n * stt - st * st;
        let a = (stt * sx - st * stx) / det;
        let b = (n * stx - st * sx) / det;
        let expected: Vec<f64> = x.iter().enumerate().map(|(i, v)| v - a - b * (i + 1) as f64).collect();
        let r = detrend_linear(&series(&x)).unwrap();
        for (got, want) in r.values().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12);
        }
        let sum: f64 = r.values().iter().sum();
        let tsum: f64 = r.values().iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
        assert!(sum.abs() < 1e-8 && tsum.abs() < 1e-8);
    }

    #[test]
    fn difference_examples() {
        let s = series(&[1.0, 3.0, 6.0, 10.0]);
        assert_eq!(difference(&s, 1).unwrap().values(), &[2.0, 3.0, 4.0]);
        assert_eq!(difference(&series(&[5.0, 5.0, 5.0]), 1).unwrap().values(), &[0.0, 0.0]);
        let twice = difference(&difference(&s, 1).unwrap(), 1).unwrap();
        assert_eq!(difference(&s, 2).unwrap().values(), twice.values());
        assert_eq!(twice.values(), &[1.0, 1.0]);
        assert!(difference(&s, 4).is_err());
        assert!(difference(&s, 0).is_err());
    }

    #[test]
    fn acf_examples() {
        let alt = series(&[1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
        // Seven lag-1 products of -1 over a denominator of 8.
        let r = acf(&alt, 1).unwrap();
        assert!((r[0] + 0.875).abs() < 1e-12);
        let r4 = acf(&series(&[1.0, -1.0, 1.0, -1.0]), 1).unwrap();
        assert!((r4[0] + 0.75).abs() < 1e-12);
        assert!(matches!(acf(&series(&[3.0; 5]), 2), Err(Error::ZeroVariance)));
        assert!(acf(&alt, 8).is_err());
    }

    #[test]
    fn acf_of_noise_is_small() {
        use crate::models::{draw_errors, ErrorDist};
        let e = draw_errors(&ErrorDist::gaussian(), 10_000, 11).unwrap();
        let r = acf(&e, 5).unwrap();
        let bound = 3.0 / (10_000f64).sqrt();
        assert!(r.iter().all(|v| v.abs() < bound), "{r:?}");
    }

    proptest! {
        #[test]
        fn detrend_is_idempotent(v in prop::collection::vec(-1e3f64..1e3, 3..60)) {
            let s = series(&v);
            let once = detrend_linear(&s).unwrap();
            let twice = detrend_linear(&once).unwrap();
            let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() <= 1e-8 * scale);
            }
        }

        #[test]
        fn difference_composes(v in prop::collection::vec(-100i32..100, 6..40), d1 in 1usize..3, d2 in 1usize..3) {
            let s = series(&v.iter().map(|&x| x as f64).collect::<Vec<_>>());
            let direct = difference(&s, d1 + d2).unwrap();
            let nested = difference(&difference(&s, d1).unwrap(), d2).unwrap();
            prop_assert_eq!(direct.values(), nested.values());
        }

        #[test]
        fn acf_bounded(v in prop::collection::vec(-1e3f64..1e3, 4..50)) {
            let s = series(&v);
            if let Ok(r) = acf(&s, 3.min(v.len() - 1)) {
                prop_assert!(r.iter().all(|x| (-1.0..=1.0).contains(x)));
            }
        }
    }
}
