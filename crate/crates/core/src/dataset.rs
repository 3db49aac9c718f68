//! Labeled numeric datasets and their CSV representation.
//!
//! A CSV dataset has a header row, one label column chosen by name, and any
//! number of numeric attribute columns. Group names are the distinct label
//! strings, ordered numerically when every label parses as a number and
//! lexicographically otherwise.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Result, UlcaError};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    labels: Vec<usize>,
    attribute_names: Vec<String>,
    group_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from an `n × d` matrix and zero-based group indices.
    pub fn new(
        x: DMatrix<f64>,
        labels: Vec<usize>,
        attribute_names: Vec<String>,
        group_names: Vec<String>,
    ) -> Result<Self> {
        let (n, d) = x.shape();
        if n < 2 || d < 2 {
            return Err(UlcaError::InvalidDataset(format!(
                "need at least 2 rows and 2 attributes, got {n}x{d}"
            )));
        }
        if labels.len() != n {
            return Err(UlcaError::DimensionMismatch(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        if attribute_names.len() != d {
            return Err(UlcaError::DimensionMismatch(format!(
                "{} attribute names for {d} columns",
                attribute_names.len()
            )));
        }
        let c = group_names.len();
        if c == 0 {
            return Err(UlcaError::InvalidDataset("no groups".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(UlcaError::InvalidDataset(format!(
                "label index {bad} out of range for {c} groups"
            )));
        }
        let mut counts = vec![0usize; c];
        for &l in &labels {
            counts[l] += 1;
        }
        if let Some(j) = counts.iter().position(|&k| k == 0) {
            return Err(UlcaError::EmptyGroup(j));
        }
        for col in 0..d {
            for row in 0..n {
                if !x[(row, col)].is_finite() {
                    return Err(UlcaError::NonFiniteInput { row, col });
                }
            }
        }
        Ok(Dataset {
            x,
            labels,
            attribute_names,
            group_names,
        })
    }

    /// Convenience constructor with generated names (`a0..`, `g0..`).
    pub fn from_parts(x: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        let d = x.ncols();
        let c = labels.iter().copied().max().map_or(0, |m| m + 1);
        Self::new(
            x,
            labels,
            (0..d).map(|i| format!("a{i}")).collect(),
            (0..c).map(|j| format!("g{j}")).collect(),
        )
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn c(&self) -> usize {
        self.group_names.len()
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.group_names.iter().position(|g| g == name)
    }

    /// Row indices belonging to each group.
    pub fn group_rows(&self) -> Vec<Vec<usize>> {
        let mut rows = vec![Vec::new(); self.c()];
        for (i, &l) in self.labels.iter().enumerate() {
            rows[l].push(i);
        }
        rows
    }

    /// Z-scores every attribute (population standard deviation). Constant
    /// columns are only centered.
    pub fn standardized(&self) -> Dataset {
        let n = self.n() as f64;
        let mut x = self.x.clone();
        for mut col in x.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
            let sd = (col.norm_squared() / n).sqrt();
            if sd > 0.0 {
                col /= sd;
            }
        }
        Dataset { x, ..self.clone() }
    }

    /// Returns a copy whose rows are replaced, keeping names and labels.
    pub fn with_x(&self, x: DMatrix<f64>) -> Result<Dataset> {
        Dataset::new(
            x,
            self.labels.clone(),
            self.attribute_names.clone(),
            self.group_names.clone(),
        )
    }

    /// SHA-256 over names, labels, and the little-endian bytes of `X`
    /// (row-major), hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for name in self.attribute_names.iter().chain(&self.group_names) {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
        }
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.d() as u64).to_le_bytes());
        for row in self.x.row_iter() {
            for v in row.iter() {
                h.update(v.to_le_bytes());
            }
        }
        for &l in &self.labels {
            h.update((l as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Parses a CSV dataset; `label_col` names the group column.
    pub fn from_csv_reader<R: Read>(reader: R, label_col: &str) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let label_idx = headers.iter().position(|h| h == label_col).ok_or_else(|| {
            UlcaError::InvalidDataset(format!("label column `{label_col}` not found"))
        })?;
        let attribute_names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != label_idx)
            .map(|(_, h)| h.to_string())
            .collect();
        let d = attribute_names.len();

        let mut values = Vec::new();
        let mut raw_labels = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(UlcaError::InvalidDataset(format!(
                    "row {} has {} fields, expected {}",
                    line + 1,
                    record.len(),
                    headers.len()
                )));
            }
            for (i, field) in record.iter().enumerate() {
                if i == label_idx {
                    raw_labels.push(field.to_string());
                } else {
                    let v: f64 = field.parse().map_err(|_| {
                        UlcaError::InvalidDataset(format!(
                            "row {}: `{field}` is not a number",
                            line + 1
                        ))
                    })?;
                    values.push(v);
                }
            }
        }
        let n = raw_labels.len();
        let group_names = ordered_group_names(&raw_labels);
        let labels = raw_labels
            .iter()
            .map(|l| group_names.iter().position(|g| g == l).unwrap())
            .collect();
        let x = DMatrix::from_row_slice(n, d, &values);
        Dataset::new(x, labels, attribute_names, group_names)
    }

    pub fn from_csv_path(path: impl AsRef<std::path::Path>, label_col: &str) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file), label_col)
    }
}

fn ordered_group_names(raw: &[String]) -> Vec<String> {
    let distinct: BTreeSet<&String> = raw.iter().collect();
    let mut names: Vec<String> = distinct.into_iter().cloned().collect();
    let numeric: Option<Vec<f64>> = names.iter().map(|s| s.parse().ok()).collect();
    if let Some(keys) = numeric {
        let mut paired: Vec<(f64, String)> = keys.into_iter().zip(names).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        names = paired.into_iter().map(|(_, s)| s).collect();
    }
    names
}

/// Writes a matrix as CSV with the given header; values use Rust's shortest
/// round-trip formatting so output is byte-stable.
pub fn write_matrix_csv<W: Write>(
    out: W,
    header: &[String],
    row_names: Option<&[String]>,
    m: &DMatrix<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for (i, row) in m.row_iter().enumerate() {
        let mut rec: Vec<String> = Vec::with_capacity(m.ncols() + 1);
        if let Some(names) = row_names {
            rec.push(names[i].clone());
        }
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
