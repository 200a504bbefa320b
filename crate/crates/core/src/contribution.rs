//! Candidate contribution measures: expected marginal contributions under a
//! policy, their Monte Carlo estimates, and exact Shapley values.
//!
//! The expected marginal contribution (EMC) of candidate `i` under policy π
//! is E_{a~π}[U(a ∪ {i}) − U(a)]; draws already containing `i` contribute
//! zero. The Shapley value is the same quantity computed under the classical
//! per-size weighting over subsets not containing `i`, and the two coincide
//! when the EMC is taken under that weighting.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::oracle::ExpectedUtilityOracle;
use crate::policy::{Policy, ShapleyWeighting};
use crate::population::Population;
use crate::selection::{Force, Selection};
use crate::util::stderr_from_moments;

/// Per-candidate contribution values with optional standard errors and a
/// label identifying how they were computed.
#[derive(Clone, Debug)]
pub struct ContributionVector {
    /// One value per candidate.
    pub values: Vec<f64>,
    /// Standard errors for sampled estimates; `None` for exact computations.
    pub stderr: Option<Vec<f64>>,
    /// Method label recorded in exports: `emc_exact`, `emc_mc`, or
    /// `shapley_exact`.
    pub method: String,
}

impl ContributionVector {
    /// Write as CSV with header `id,value,stderr,method`; the stderr field is
    /// empty for exact computations.
    pub fn write_csv(&self, ids: &[String], path: &Path) -> Result<()> {
        if ids.len() != self.values.len() {
            return Err(Error::Dimension(format!(
                "{} ids for {} contribution values",
                ids.len(),
                self.values.len()
            )));
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["id", "value", "stderr", "method"])?;
        for (i, id) in ids.iter().enumerate() {
            let se = match &self.stderr {
                Some(s) => s[i].to_string(),
                None => String::new(),
            };
            w.write_record([id.clone(), self.values[i].to_string(), se, self.method.clone()])?;
        }
        w.flush().map_err(Error::Io)?;
        Ok(())
    }
}

/// Exact expected marginal contributions under a policy.
pub fn emc_exact(
    oracle: &ExpectedUtilityOracle,
    pi: &Policy,
    pop: &Population,
) -> Result<ContributionVector> {
    let values = emc_over_distribution(oracle, pi, pop, None)?;
    Ok(ContributionVector { values, stderr: None, method: "emc_exact".into() })
}

/// Exact expected marginal contributions after pushing every drawn subset
/// through a forcing transform.
pub fn emc_exact_forced(
    oracle: &ExpectedUtilityOracle,
    pi: &Policy,
    pop: &Population,
    force: &Force,
) -> Result<Vec<f64>> {
    emc_over_distribution(oracle, pi, pop, Some(force))
}

fn emc_over_distribution(
    oracle: &ExpectedUtilityOracle,
    pi: &Policy,
    pop: &Population,
    force: Option<&Force>,
) -> Result<Vec<f64>> {
    let n = oracle.n();
    if let Some(support) = pi.small_support() {
        let mut values = vec![0.0; n];
        for (a, p) in support {
            let a = match force {
                Some(f) => a.forced(f),
                None => a,
            };
            accumulate_gains(oracle, &a, p, &mut values)?;
        }
        return Ok(values);
    }
    let probs = pi.subset_distribution(pop)?;
    let table = oracle.value_table()?;
    let (inc, exc) = force_masks(force);
    let mut values = vec![0.0; n];
    for (mask, p) in probs.iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        let m = (mask as u64 | inc) & !exc;
        let base = table[m as usize];
        for (i, v) in values.iter_mut().enumerate() {
            if m & (1 << i) == 0 {
                *v += p * (table[(m | (1 << i)) as usize] - base);
            }
        }
    }
    Ok(values)
}

fn force_masks(force: Option<&Force>) -> (u64, u64) {
    match force {
        Some(f) => (
            f.include().iter().fold(0u64, |m, &i| m | (1 << i)),
            f.exclude().iter().fold(0u64, |m, &i| m | (1 << i)),
        ),
        None => (0, 0),
    }
}

fn accumulate_gains(
    oracle: &ExpectedUtilityOracle,
    a: &Selection,
    weight: f64,
    values: &mut [f64],
) -> Result<()> {
    let gains = oracle.marginal_gains(a)?;
    for (v, g) in values.iter_mut().zip(gains) {
        *v += weight * g;
    }
    Ok(())
}

/// Monte Carlo expected marginal contributions. All candidates share the same
/// drawn subsets, and each candidate's standard error comes from the unbiased
/// sample variance of its per-draw gains.
pub fn emc_sampled(
    oracle: &ExpectedUtilityOracle,
    pi: &Policy,
    pop: &Population,
    samples: usize,
    seed: u64,
) -> Result<ContributionVector> {
    if samples == 0 {
        return Err(Error::Argument("sampled contributions need at least one draw".into()));
    }
    let n = oracle.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; n];
    let mut sumsq = vec![0.0; n];
    for _ in 0..samples {
        let a = pi.sample(pop, &mut rng)?;
        let base = oracle.expected_set_utility(&a)?;
        let (with_i, _) = oracle.inclusion_values(&a)?;
        for i in 0..n {
            // Members of the draw contribute exactly zero: U(a ∪ {i}) = U(a).
            let d = if a.contains(i) { 0.0 } else { with_i[i] - base };
            sum[i] += d;
            sumsq[i] += d * d;
        }
    }
    let values: Vec<f64> = sum.iter().map(|s| s / samples as f64).collect();
    let stderr: Vec<f64> = sum
        .iter()
        .zip(&sumsq)
        .map(|(s, sq)| stderr_from_moments(*s, *sq, samples))
        .collect();
    Ok(ContributionVector { values, stderr: Some(stderr), method: "emc_mc".into() })
}

/// Exact Shapley values by direct subset enumeration.
pub fn shapley_exact(oracle: &ExpectedUtilityOracle) -> Result<ContributionVector> {
    let values = emc_shapley_weighted(oracle)?;
    Ok(ContributionVector { values, stderr: None, method: "shapley_exact".into() })
}

/// Expected marginal contributions taken under the per-size Shapley
/// weighting. This recovers the Shapley value exactly: each subset `a` not
/// containing `i` carries weight 1/(N·C(N−1,|a|)).
pub fn emc_shapley_weighted(oracle: &ExpectedUtilityOracle) -> Result<Vec<f64>> {
    let n = oracle.n();
    let table = oracle.value_table()?;
    let weighting = ShapleyWeighting::new(n);
    let mut values = vec![0.0; n];
    for (mask, base) in table.iter().enumerate() {
        let mask = mask as u64;
        let a = Selection::from_mask(n, mask)?;
        let w = weighting.weight(&a);
        if w == 0.0 {
            continue;
        }
        for (i, v) in values.iter_mut().enumerate() {
            if mask & (1 << i) == 0 {
                *v += w * (table[(mask | (1 << i)) as usize] - base);
            }
        }
    }
    Ok(values)
}
