//! Candidate populations: identifiers, group labels, and feature rows.

use std::path::Path;

use crate::error::{Error, Result};

/// An ordered collection of candidates. Feature rows share one width; the
/// single categorical attribute (`group`) carries the protected label.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    ids: Vec<String>,
    groups: Vec<String>,
    features: Vec<Vec<f64>>,
    dim: usize,
}

impl Population {
    /// Build a population; all three columns must have the same length and
    /// every feature row the same width.
    pub fn new(ids: Vec<String>, groups: Vec<String>, features: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != groups.len() || ids.len() != features.len() {
            return Err(Error::Dimension(format!(
                "ids ({}), groups ({}) and features ({}) must have equal length",
                ids.len(),
                groups.len(),
                features.len()
            )));
        }
        let dim = features.first().map(|r| r.len()).unwrap_or(0);
        for (i, row) in features.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Dimension(format!(
                    "feature row {i} has width {} but expected {dim}",
                    row.len()
                )));
            }
        }
        Ok(Population { ids, groups, features, dim })
    }

    /// Number of candidates.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    /// True when there are no candidates.
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Feature width.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Candidate identifier.
    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    /// All identifiers, in order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Group label of candidate `i`.
    pub fn group_label(&self, i: usize) -> &str {
        &self.groups[i]
    }

    /// Feature row of candidate `i`.
    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    /// Distinct group labels in order of first appearance.
    pub fn distinct_groups(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for g in &self.groups {
            if !seen.contains(&g.as_str()) {
                seen.push(g);
            }
        }
        seen
    }

    /// Indices of the candidates carrying `label`.
    pub fn group_indices(&self, label: &str) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.as_str() == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// Write as CSV with header `id,group,f1,..,fd`. Feature values use the
    /// shortest round-trippable decimal form, so rewriting is bit-identical.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string(), "group".to_string()];
        header.extend((1..=self.dim).map(|k| format!("f{k}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.ids[i].clone(), self.groups[i].clone()];
            rec.extend(self.features[i].iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(Error::Io)?;
        Ok(())
    }

    /// Read back a population written by [`Population::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "id" || &headers[1] != "group" {
            return Err(Error::Parse(format!(
                "expected header starting with id,group in {}",
                path.display()
            )));
        }
        let dim = headers.len() - 2;
        let mut ids = Vec::new();
        let mut groups = Vec::new();
        let mut features = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != dim + 2 {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {}",
                    line + 2,
                    rec.len(),
                    dim + 2
                )));
            }
            ids.push(rec[0].to_string());
            groups.push(rec[1].to_string());
            let row: Result<Vec<f64>> = (0..dim)
                .map(|k| {
                    rec[k + 2].parse::<f64>().map_err(|e| {
                        Error::Parse(format!("row {} field f{}: {e}", line + 2, k + 1))
                    })
                })
                .collect();
            features.push(row?);
        }
        Population::new(ids, groups, features)
    }
}
