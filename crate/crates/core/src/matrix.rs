//! Dense row-stochastic transition matrices and their file formats.
//!
//! Two input formats are accepted:
//!
//! * CSV: `n` lines of `n` comma-separated probabilities, no header.
//! * JSON: `{"labels": ["a", ...], "rows": [[...], ...]}` where `labels` is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ChainError, Result};

/// Largest tolerated |row sum - 1|. Rows are validated, never repaired.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// A validated square row-stochastic matrix, stored dense and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    entries: Vec<f64>,
    labels: Vec<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct JsonMatrix {
    #[serde(default)]
    labels: Option<Vec<String>>,
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    /// Builds a matrix from rows, using default labels `s0..s(n-1)`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_labels(rows, None)
    }

    pub fn with_labels(rows: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(ChainError::Empty);
        }
        let mut entries = Vec::with_capacity(n * n);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ChainError::NotSquare {
                    row: r,
                    len: row.len(),
                    expected: n,
                });
            }
            entries.extend_from_slice(row);
        }
        let labels = match labels {
            Some(l) if l.len() != n => {
                return Err(ChainError::LabelCount {
                    expected: n,
                    got: l.len(),
                })
            }
            Some(l) => l,
            None => (0..n).map(|k| format!("s{k}")).collect(),
        };
        let m = TransitionMatrix { n, entries, labels };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        for r in 0..self.n {
            let row = self.row(r);
            for (c, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(ChainError::EntryOutOfRange {
                        row: r,
                        col: c,
                        value: p,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ChainError::RowSum {
                    row: r,
                    sum,
                    deficit: 1.0 - sum,
                });
            }
        }
        Ok(())
    }

    /// Number of states.
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    /// Resolves a state given either as a 0-based index or as a label.
    pub fn resolve_state(&self, key: &str) -> Result<usize> {
        if let Some(k) = self.labels.iter().position(|l| l == key) {
            return Ok(k);
        }
        match key.parse::<usize>() {
            Ok(k) if k < self.n => Ok(k),
            Ok(k) => Err(ChainError::StateOutOfRange { index: k, n: self.n }),
            Err(_) => Err(ChainError::UnknownState(key.to_string())),
        }
    }

    pub fn check_index(&self, k: usize) -> Result<()> {
        if k < self.n {
            Ok(())
        } else {
            Err(ChainError::StateOutOfRange { index: k, n: self.n })
        }
    }

    /// A copy of this matrix with row `j` replaced by the unit row at `j`.
    pub fn with_absorbing(&self, j: usize) -> Result<Self> {
        self.check_index(j)?;
        let mut m = self.clone();
        let n = self.n;
        m.entries[j * n..(j + 1) * n].iter_mut().for_each(|p| *p = 0.0);
        m.entries[j * n + j] = 1.0;
        Ok(m)
    }

    /// Relabels states: state `k` of the result is state `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let rows = perm
            .iter()
            .map(|&a| perm.iter().map(|&b| self.get(a, b)).collect())
            .collect();
        let labels = perm.iter().map(|&a| self.labels[a].clone()).collect();
        Self::with_labels(rows, Some(labels))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|r| self.row(r).to_vec()).collect()
    }

    /// Serializes in the JSON input schema.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&JsonMatrix {
            labels: Some(self.labels.clone()),
            rows: self.to_rows(),
        })
        .expect("matrix serializes")
    }
}

/// Parses a matrix from text, detecting JSON by a leading `{`.
pub fn load_matrix(source: &str) -> Result<TransitionMatrix> {
    if source.trim_start().starts_with('{') {
        parse_json(source)
    } else {
        parse_csv(source)
    }
}

pub fn load_matrix_file(path: impl AsRef<Path>) -> Result<TransitionMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ChainError::Io(format!("{}: {e}", path.display())))?;
    load_matrix(&text)
}

fn parse_json(source: &str) -> Result<TransitionMatrix> {
    let doc: JsonMatrix =
        serde_json::from_str(source).map_err(|e| ChainError::Parse(e.to_string()))?;
    TransitionMatrix::with_labels(doc.rows, doc.labels)
}

fn parse_csv(source: &str) -> Result<TransitionMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source.as_bytes());
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ChainError::Parse(e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.parse::<f64>().map_err(|e| {
                    ChainError::Parse(format!("line {}, field {}: '{f}': {e}", r + 1, c + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    TransitionMatrix::from_rows(rows)
}
