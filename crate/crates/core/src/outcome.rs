//! Outcome matrices and the models that produce them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::Population;

/// An N×m matrix of per-candidate outcome values (rows = candidates,
/// columns = outcome dimensions), stored densely in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl OutcomeMatrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        OutcomeMatrix { data: vec![0.0; rows * cols], rows, cols }
    }

    /// Build from explicit rows; all rows must share one width.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Dimension(format!(
                    "outcome row {i} has width {} but expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(OutcomeMatrix { data, rows: rows.len(), cols })
    }

    /// Number of candidate rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of outcome columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Value for candidate `i`, outcome column `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Mutable access for builders.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Mean of row `i`; 0 when there are no columns.
    pub fn row_mean(&self, i: usize) -> f64 {
        if self.cols == 0 {
            0.0
        } else {
            self.row(i).iter().sum::<f64>() / self.cols as f64
        }
    }

    /// Write as CSV with header `id,y1,..,ym`, ids taken from the population.
    pub fn write_csv(&self, ids: &[String], path: &Path) -> Result<()> {
        if ids.len() != self.rows {
            return Err(Error::Dimension(format!(
                "{} ids for {} outcome rows",
                ids.len(),
                self.rows
            )));
        }
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string()];
        header.extend((1..=self.cols).map(|k| format!("y{k}")));
        w.write_record(&header)?;
        for i in 0..self.rows {
            let mut rec = vec![ids[i].clone()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(Error::Io)?;
        Ok(())
    }

    /// Read a matrix written by [`OutcomeMatrix::write_csv`], dropping ids.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let cols = r.headers()?.len().saturating_sub(1);
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let row: Result<Vec<f64>> = (0..cols)
                .map(|k| {
                    rec[k + 1]
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {} y{}: {e}", line + 2, k + 1)))
                })
                .collect();
            rows.push(row?);
        }
        OutcomeMatrix::from_rows(rows)
    }
}

/// A fitted (or hidden) per-column affine outcome model with predictions
/// clipped to the unit interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearOutcomeModel {
    /// One coefficient row per outcome column, each of feature width.
    pub coeffs: Vec<Vec<f64>>,
    /// One intercept per outcome column.
    pub intercepts: Vec<f64>,
    /// True when the fit fell back to a ridge-regularized solve.
    pub ridge: bool,
}

impl LinearOutcomeModel {
    /// Predict the outcome matrix for a population, clipping to [0, 1].
    pub fn predict(&self, pop: &Population) -> Result<OutcomeMatrix> {
        if self.coeffs.len() != self.intercepts.len() {
            return Err(Error::Model(format!(
                "{} coefficient rows but {} intercepts",
                self.coeffs.len(),
                self.intercepts.len()
            )));
        }
        let m = self.coeffs.len();
        let mut out = OutcomeMatrix::zeros(pop.len(), m);
        for (j, (w, b)) in self.coeffs.iter().zip(&self.intercepts).enumerate() {
            if w.len() != pop.dim() {
                return Err(Error::Dimension(format!(
                    "model column {j} has {} coefficients but features have width {}",
                    w.len(),
                    pop.dim()
                )));
            }
            for i in 0..pop.len() {
                let x = pop.feature_row(i);
                let v: f64 = b + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
                out.set(i, j, v.clamp(0.0, 1.0));
            }
        }
        Ok(out)
    }
}

/// Where outcome values come from when evaluating utilities.
#[derive(Clone, Debug)]
pub enum OutcomeModel {
    /// A fixed observed/ground-truth matrix.
    Table(OutcomeMatrix),
    /// A fitted affine model evaluated on the population's features.
    Linear(LinearOutcomeModel),
    /// A finite mixture of outcome tables with nonnegative weights summing
    /// to one; expected utilities average over the atoms.
    Mixture(Vec<(OutcomeMatrix, f64)>),
}

impl OutcomeModel {
    /// Validate internal invariants against a population.
    pub fn validate(&self, pop: &Population) -> Result<()> {
        match self {
            OutcomeModel::Table(y) => {
                if y.rows() != pop.len() {
                    return Err(Error::Dimension(format!(
                        "outcome table has {} rows for {} candidates",
                        y.rows(),
                        pop.len()
                    )));
                }
            }
            OutcomeModel::Linear(model) => {
                // Prediction performs the full shape check.
                model.predict(pop)?;
            }
            OutcomeModel::Mixture(atoms) => {
                if atoms.is_empty() {
                    return Err(Error::Model("mixture has no atoms".into()));
                }
                let total: f64 = atoms.iter().map(|(_, w)| w).sum();
                if atoms.iter().any(|(_, w)| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Model(format!(
                        "mixture weights must be nonnegative and sum to 1, got total {total}"
                    )));
                }
                let cols = atoms[0].0.cols();
                for (y, _) in atoms {
                    if y.rows() != pop.len() || y.cols() != cols {
                        return Err(Error::Dimension(
                            "mixture atoms must share the population's shape".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Mean outcome matrix: the table itself, the clipped affine prediction,
    /// or the mixture average.
    pub fn predict(&self, pop: &Population) -> Result<OutcomeMatrix> {
        self.validate(pop)?;
        match self {
            OutcomeModel::Table(y) => Ok(y.clone()),
            OutcomeModel::Linear(model) => model.predict(pop),
            OutcomeModel::Mixture(atoms) => {
                let cols = atoms[0].0.cols();
                let mut out = OutcomeMatrix::zeros(pop.len(), cols);
                for (y, w) in atoms {
                    for i in 0..pop.len() {
                        for j in 0..cols {
                            out.set(i, j, out.get(i, j) + w * y.get(i, j));
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}
