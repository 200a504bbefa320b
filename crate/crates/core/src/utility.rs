//! Set-utility functions over candidate subsets and their outcomes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::outcome::OutcomeMatrix;
use crate::selection::Selection;

/// Largest population for which 2^N tables are enumerated exactly.
pub const EXACT_ENUMERATION_LIMIT: usize = 20;

/// Floor applied inside logarithms so empty or worthless selections stay
/// finite instead of diverging to −∞.
pub const LOG_FLOOR: f64 = 1e-9;

/// An explicit utility table over all 2^n subsets of an n-candidate
/// population. Subset masks use bit `k` for candidate `k` (candidate 0 is the
/// least significant bit).
#[derive(Clone, Debug, PartialEq)]
pub struct TabularUtility {
    n: usize,
    values: Vec<f64>,
}

impl TabularUtility {
    /// Build a table; `values` must have length 2^n and `n` must stay within
    /// the exact-enumeration limit.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n > EXACT_ENUMERATION_LIMIT {
            return Err(Error::Capacity(format!(
                "explicit subset tables support at most {EXACT_ENUMERATION_LIMIT} candidates, got {n}"
            )));
        }
        if values.len() != 1usize << n {
            return Err(Error::Dimension(format!(
                "table for {n} candidates needs {} entries, got {}",
                1usize << n,
                values.len()
            )));
        }
        Ok(TabularUtility { n, values })
    }

    /// Population size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// The full subset table, indexed by mask.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Utility of one subset.
    pub fn value(&self, a: &Selection) -> Result<f64> {
        if a.len() != self.n {
            return Err(Error::Dimension(format!(
                "selection over {} candidates against a {}-candidate table",
                a.len(),
                self.n
            )));
        }
        Ok(self.values[a.mask()? as usize])
    }

    /// Write the table as CSV with header `mask,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["mask", "value"])?;
        for (mask, v) in self.values.iter().enumerate() {
            w.write_record([mask.to_string(), v.to_string()])?;
        }
        w.flush().map_err(Error::Io)?;
        Ok(())
    }

    /// Read a table written by [`TabularUtility::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut values = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let mask: usize = rec[0]
                .parse()
                .map_err(|e| Error::Parse(format!("row {} mask: {e}", line + 2)))?;
            if mask != values.len() {
                return Err(Error::Parse(format!(
                    "row {}: masks must be contiguous from 0, got {mask}",
                    line + 2
                )));
            }
            values.push(
                rec[1]
                    .parse()
                    .map_err(|e| Error::Parse(format!("row {} value: {e}", line + 2)))?,
            );
        }
        let n = values.len().trailing_zeros() as usize;
        if values.is_empty() || values.len() != 1usize << n {
            return Err(Error::Parse(format!(
                "table length {} is not a power of two",
                values.len()
            )));
        }
        TabularUtility::new(n, values)
    }
}

/// The supported set-utility families.
#[derive(Clone, Debug)]
pub enum UtilityFunction {
    /// Explicit subset table; outcomes are ignored.
    Tabular(TabularUtility),
    /// Modular utility: sum of selected candidates' mean outcomes minus a
    /// per-selection cost.
    Linear { cost: f64 },
    /// Diminishing-returns utility: sum over outcome columns of the log of
    /// the selected candidates' column totals, minus a per-selection cost.
    LogLinear { cost: f64, floor: f64 },
}

impl UtilityFunction {
    /// Log-linear utility with the standard floor.
    pub fn log_linear(cost: f64) -> Self {
        UtilityFunction::LogLinear { cost, floor: LOG_FLOOR }
    }

    /// Utility of one subset given its outcome matrix.
    pub fn set_utility(&self, a: &Selection, y: &OutcomeMatrix) -> Result<f64> {
        match self {
            UtilityFunction::Tabular(table) => table.value(a),
            UtilityFunction::Linear { cost } => {
                if y.rows() != a.len() {
                    return Err(Error::Dimension(format!(
                        "selection over {} candidates but outcomes have {} rows",
                        a.len(),
                        y.rows()
                    )));
                }
                Ok(a.indices().map(|i| y.row_mean(i) - cost).sum())
            }
            UtilityFunction::LogLinear { cost, floor } => {
                if y.rows() != a.len() {
                    return Err(Error::Dimension(format!(
                        "selection over {} candidates but outcomes have {} rows",
                        a.len(),
                        y.rows()
                    )));
                }
                let mut total = 0.0;
                for j in 0..y.cols() {
                    let s: f64 = a.indices().map(|i| y.get(i, j)).sum();
                    total += s.max(*floor).ln();
                }
                Ok(total - cost * a.count() as f64)
            }
        }
    }
}
