//! Feature matrix: one row per waveform, columns keyed by feature id, with
//! optional training labels. Stored as CSV.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::features::{catalog_version_for, FeatureVector};
use crate::Condition;

pub const LABEL_CONDITION: &str = "label_condition";
pub const LABEL_PCT_U50: &str = "label_pct_u50";

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Labels {
    pub condition: Option<Condition>,
    pub pct_u50: Option<f64>,
}

impl Labels {
    pub fn new(condition: Option<Condition>, pct_u50: Option<f64>) -> Labels {
        Labels { condition, pct_u50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Vec<Labels>,
}

impl FeatureMatrix {
    pub fn new(
        ids: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<Labels>,
    ) -> Result<FeatureMatrix> {
        if rows.len() != labels.len() {
            return Err(invalid(format!(
                "{} rows but {} label records",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != ids.len()) {
            return Err(invalid(format!(
                "row {bad} has {} values, expected {}",
                rows[bad].len(),
                ids.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(invalid(format!("duplicate column `{dup}`")));
        }
        Ok(FeatureMatrix { ids, rows, labels })
    }

    pub fn from_vectors(
        ids: Vec<String>,
        vectors: &[FeatureVector],
        labels: Vec<Labels>,
    ) -> Result<FeatureMatrix> {
        let version = catalog_version_for(&ids);
        if let Some(v) = vectors.iter().find(|v| v.catalog_version != version) {
            return Err(Error::IncompatibleInput(format!(
                "vector catalog {} does not match columns {version}",
                v.catalog_version
            )));
        }
        FeatureMatrix::new(
            ids,
            vectors.iter().map(|v| v.values.clone()).collect(),
            labels,
        )
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[Labels] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.ids.len()
    }

    pub fn catalog_version(&self) -> String {
        catalog_version_for(&self.ids)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_features()).map(|j| self.column(j)).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|c| c == id)
    }

    pub fn row_vector(&self, i: usize) -> FeatureVector {
        FeatureVector {
            values: self.rows[i].clone(),
            catalog_version: self.catalog_version(),
        }
    }

    pub fn subset_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            ids: self.ids.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }

    /// Keep only the named columns, in the given order.
    pub fn select_columns(&self, ids: &[String]) -> Result<FeatureMatrix> {
        let idx = ids
            .iter()
            .map(|id| {
                self.index_of(id)
                    .ok_or_else(|| Error::IncompatibleInput(format!("missing feature `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureMatrix {
            ids: ids.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&j| r[j]).collect())
                .collect(),
            labels: self.labels.clone(),
        })
    }

    /// Row indices whose condition label equals `condition`.
    pub fn rows_with_condition(&self, condition: Condition) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&i| self.labels[i].condition == Some(condition))
            .collect()
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let has_cond = self.labels.iter().any(|l| l.condition.is_some());
        let has_pct = self.labels.iter().any(|l| l.pct_u50.is_some());
        let mut header: Vec<&str> = self.ids.iter().map(String::as_str).collect();
        if has_cond {
            header.push(LABEL_CONDITION);
        }
        if has_pct {
            header.push(LABEL_PCT_U50);
        }
        writeln!(out, "{}", header.join(","))?;
        for (row, labels) in self.rows.iter().zip(&self.labels) {
            let mut cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            if has_cond {
                cells.push(labels.condition.map(|c| c.to_string()).unwrap_or_default());
            }
            if has_pct {
                cells.push(labels.pct_u50.map(|p| p.to_string()).unwrap_or_default());
            }
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(reader: impl BufRead) -> Result<FeatureMatrix> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty feature matrix".into()))??;
        let columns: Vec<String> = header
            .trim()
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let cond_col = columns.iter().position(|c| c == LABEL_CONDITION);
        let pct_col = columns.iter().position(|c| c == LABEL_PCT_U50);
        let feature_cols: Vec<usize> = (0..columns.len())
            .filter(|&j| Some(j) != cond_col && Some(j) != pct_col)
            .collect();
        let ids = feature_cols.iter().map(|&j| columns[j].clone()).collect();

        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != columns.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} cells, header has {}",
                    n + 1,
                    cells.len(),
                    columns.len()
                )));
            }
            let row = feature_cols
                .iter()
                .map(|&j| {
                    let v: f64 = cells[j].parse().map_err(|_| {
                        Error::Parse(format!("row {}: `{}` is not a number", n + 1, cells[j]))
                    })?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::Parse(format!(
                            "row {}: non-finite value in `{}`",
                            n + 1,
                            columns[j]
                        )))
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            let condition = match cond_col.map(|j| cells[j]) {
                Some(c) if !c.is_empty() => Some(c.parse()?),
                _ => None,
            };
            let pct = match pct_col.map(|j| cells[j]) {
                Some(p) if !p.is_empty() => Some(
                    p.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("row {}: bad %U50 `{p}`", n + 1)))?,
                ),
                _ => None,
            };
            rows.push(row);
            labels.push(Labels::new(condition, pct));
        }
        FeatureMatrix::new(ids, rows, labels)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
        let file = std::fs::File::open(path)?;
        FeatureMatrix::read_csv(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }
}
