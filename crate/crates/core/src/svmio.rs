//! LIBSVM data files and the linear-kernel C-SVM dual
//!
//! ```text
//!     minimize    1/2 a' Y X X' Y a - 1' a
//!     subject to  y' a = 0,  0 <= a <= C
//! ```

use std::io::BufRead;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Hessian, LinearConstraint, LinearOperator, Problem};

/// Two-class dataset with sparse rows (0-based feature indices).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Labels in `{-1, +1}`.
    pub labels: Vec<f64>,
    pub n_features: usize,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

fn parse_err(line: usize, token: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, token, message: message.into() }
}

/// Parses `<label> <index>:<value> ...` lines. Text after `#` is ignored and
/// blank lines are skipped. Labels `{-1, +1}` are kept, `{0, 1}` map `0` to
/// `-1`, and any other pair maps the first label seen to `+1`.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut n_features = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        let Some(label) = tokens.next() else { continue };
        let label: f64 = label
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(lineno, 1, format!("invalid label '{label}'")))?;
        let mut row: Vec<(usize, f64)> = Vec::new();
        for (k, tok) in tokens.enumerate() {
            let token = k + 2;
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, token, format!("expected index:value, got '{tok}'")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno, token, format!("invalid feature index '{idx}'")))?;
            if idx == 0 {
                return Err(parse_err(lineno, token, "feature indices are 1-based"));
            }
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(lineno, token, format!("invalid feature value '{val}'")))?;
            if let Some(&(prev, _)) = row.last() {
                if idx - 1 <= prev {
                    return Err(parse_err(lineno, token, "feature indices must be strictly increasing"));
                }
            }
            n_features = n_features.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
        raw_labels.push(label);
    }
    let labels = normalize_labels(&raw_labels)?;
    Ok(Dataset { rows, labels, n_features })
}

pub fn parse_libsvm_str(text: &str) -> Result<Dataset> {
    parse_libsvm(text.as_bytes())
}

pub fn read_libsvm(path: impl AsRef<std::path::Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    parse_libsvm(std::io::BufReader::new(file))
}

fn normalize_labels(raw: &[f64]) -> Result<Vec<f64>> {
    let mut distinct: Vec<f64> = Vec::new();
    for &v in raw {
        if !distinct.contains(&v) {
            distinct.push(v);
        }
    }
    if distinct.len() > 2 {
        return Err(Error::InvalidDataset(format!("more than two classes: {distinct:?}")));
    }
    let plus_minus = distinct.iter().all(|v| *v == 1.0 || *v == -1.0);
    let zero_one = distinct.iter().all(|v| *v == 0.0 || *v == 1.0);
    Ok(raw
        .iter()
        .map(|&v| {
            if plus_minus {
                v
            } else if zero_one {
                if v == 0.0 {
                    -1.0
                } else {
                    1.0
                }
            } else if v == distinct[0] {
                1.0
            } else {
                -1.0
            }
        })
        .collect())
}

/// `a -> Y X X' Y a` for a linear kernel, two sparse passes per product.
#[derive(Debug)]
pub struct LinearKernelGram {
    rows: Vec<Vec<(usize, f64)>>,
    labels: Vec<f64>,
    n_features: usize,
}

impl LinearKernelGram {
    pub fn new(ds: &Dataset) -> Self {
        Self { rows: ds.rows.clone(), labels: ds.labels.clone(), n_features: ds.n_features }
    }
}

impl LinearOperator for LinearKernelGram {
    fn dim(&self) -> usize {
        self.rows.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut w = vec![0.0; self.n_features];
        for ((row, y), xi) in self.rows.iter().zip(&self.labels).zip(x) {
            let s = y * xi;
            if s != 0.0 {
                for &(j, v) in row {
                    w[j] += s * v;
                }
            }
        }
        for ((row, y), o) in self.rows.iter().zip(&self.labels).zip(out.iter_mut()) {
            *o = y * row.iter().map(|&(j, v)| v * w[j]).sum::<f64>();
        }
    }
}

/// The dual problem with bounds `[0, C]` and constraint `y'a = 0`.
pub fn build_dual(ds: &Dataset, c: f64) -> Result<Problem> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidConfig(format!("C must be positive, got {c}")));
    }
    let n = ds.n_samples();
    if n == 0 {
        return Err(Error::InvalidDataset("no samples".into()));
    }
    let has_pos = ds.labels.iter().any(|y| *y > 0.0);
    let has_neg = ds.labels.iter().any(|y| *y < 0.0);
    if !(has_pos && has_neg) {
        return Err(Error::InvalidDataset("dataset has a single class".into()));
    }
    Problem::new(
        Hessian::Operator(Arc::new(LinearKernelGram::new(ds))),
        vec![1.0; n],
        Some(LinearConstraint { q: ds.labels.clone(), b: 0.0 }),
        vec![0.0; n],
        vec![c; n],
    )
}
