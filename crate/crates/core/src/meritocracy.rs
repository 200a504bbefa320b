//! Stability of selection policies: swap stability, local stability, their
//! deviation measures, and combined audits.
//!
//! A policy is *swap stable* when no preference is contradicted by utility:
//! for every ordered pair where candidate `i` is selected more often than
//! `j`, forcing the swap in `i`'s favor must not lose utility, i.e.
//! U(π+i−j) ≥ U(π−i+j). It is *locally stable* when no single candidate's
//! expected marginal contribution is positive (nobody's unconditional
//! inclusion would raise expected utility). A policy satisfying both is
//! called meritocratic here. The two notions genuinely differ: a mixture
//! over several optimal sets can be locally stable yet swap unstable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::contribution::emc_exact;
use crate::error::{Error, Result};
use crate::oracle::ExpectedUtilityOracle;
use crate::policy::Policy;
use crate::population::Population;
use crate::util::stderr_from_moments;

/// One violated swap-stability pair: `i` is preferred to `j` by the policy's
/// marginals, yet swapping in `i`'s favor loses `shortfall` utility.
#[derive(Clone, Debug, Serialize)]
pub struct SwapWitness {
    /// The more-selected candidate.
    pub i: usize,
    /// The less-selected candidate.
    pub j: usize,
    /// U(π−i+j) − U(π+i−j), positive for a violation.
    pub shortfall: f64,
}

/// One violated local-stability candidate: including `i` unconditionally
/// would raise expected utility by `gain`.
#[derive(Clone, Debug, Serialize)]
pub struct LocalWitness {
    /// The improving candidate.
    pub i: usize,
    /// The candidate's expected marginal contribution.
    pub gain: f64,
}

/// Outcome of a stability audit. Exact audits fill in the boolean verdicts;
/// sampled audits leave them `None` and attach standard errors instead.
#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    /// Caller-supplied identifier for the audited policy.
    pub policy_id: String,
    /// Expected utility of the policy.
    pub utility: f64,
    /// Swap deviation: preference-weighted sum of positive swap shortfalls.
    pub dev_swap: f64,
    /// Local deviation: sum of positive expected marginal contributions.
    pub dev_local: f64,
    /// Swap-stability verdict (`None` for sampled audits).
    pub swap_stable: Option<bool>,
    /// Local-stability verdict (`None` for sampled audits).
    pub local_stable: Option<bool>,
    /// Both verdicts combined (`None` for sampled audits).
    pub meritocratic: Option<bool>,
    /// Standard error of `dev_swap` for sampled audits.
    pub dev_swap_stderr: Option<f64>,
    /// Standard error of `dev_local` for sampled audits.
    pub dev_local_stderr: Option<f64>,
}

impl AuditReport {
    /// Pretty JSON representation of the full report.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Header for the flat CSV form.
    pub fn csv_header() -> &'static str {
        "policy_id,utility,dev_swap,dev_local,swap_stable,local_stable"
    }

    /// Flat CSV row matching [`AuditReport::csv_header`]; verdicts render as
    /// `true`/`false`, or empty when undetermined.
    pub fn csv_row(&self) -> String {
        let verdict = |v: Option<bool>| v.map(|b| b.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.policy_id,
            self.utility,
            self.dev_swap,
            self.dev_local,
            verdict(self.swap_stable),
            verdict(self.local_stable)
        )
    }
}

/// Exact first- and second-order policy moments used by the stability
/// measures: expected utility, expected marginal contributions, and the full
/// expected swap matrix (row-major, entry `[i*n + j]` = U(π+i−j)).
fn exact_moments(
    oracle: &ExpectedUtilityOracle,
    pi: &Policy,
    pop: &Population,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n = oracle.n();
    if pop.len() != n {
        return Err(Error::Dimension(format!(
            "population of {} candidates for an oracle over {n}",
            pop.len()
        )));
    }
    if let Some(support) = pi.small_support() {
        let mut utility = 0.0;
        let mut emc = vec![0.0; n];
        let mut swaps = vec![0.0; n * n];
        for (a, p) in support {
            utility += p * oracle.expected_set_utility(&a)?;
            for (slot, g) in emc.iter_mut().zip(oracle.marginal_gains(&a)?) {
                *slot += p * g;
            }
            for (slot, s) in swaps.iter_mut().zip(oracle.swap_values(&a)?) {
                *slot += p * s;
            }
        }
        return Ok((utility, emc, swaps));
    }
    let probs = pi.subset_distribution(pop)?;
    let table = oracle.value_table()?;
    let mut utility = 0.0;
    let mut emc = vec![0.0; n];
    let mut swaps = vec![0.0; n * n];
    for (mask, p) in probs.iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        let mask = mask as u64;
        let base = table[mask as usize];
        utility += p * base;
        for i in 0..n {
            let with_i = mask | (1 << i);
            emc[i] += p * (table[with_i as usize] - base);
            for j in 0..n {
                swaps[i * n + j] += p * table[(with_i & !(1u64 << j)) as usize];
            }
        }
    }
    Ok((utility, emc, swaps))
}

/// Ordered pairs `(i, j, preference)` where candidate `i`'s marginal exceeds
/// `j`'s by more than `tol`.
fn preferred_pairs(marginals: &[f64], tol: f64) -> Vec<(usize, usize, f64)> {
    let n = marginals.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && marginals[i] - marginals[j] > tol {
                pairs.push((i, j, marginals[i] - marginals[j]));
            }
        }
    }
    pairs
}

/// Check swap stability exactly. Returns the verdict plus every violated
/// pair: `i` preferred to `j` (marginal gap above `tol`) with a swap
/// shortfall above `tol`.
pub fn check_swap_stability(
    oracle: &ExpectedUtilityOracle,
    pi: &Policy,
    pop: &Population,
    tol: f64,
) -> Result<(bool, Vec<SwapWitness>)> {
    let (_, _, swaps) = exact_moments(oracle, pi, pop)?;
    let marginals = pi.marginals(pop)?;
    let witnesses = swap_witnesses(&marginals, &swaps, oracle.n(), tol);
    Ok((witnesses.is_empty(), witnesses))
}

fn swap_witnesses(marginals: &[f64], swaps: &[f64], n: usize, tol: f64) -> Vec<SwapWitness> {
    preferred_pairs(marginals, tol)
        .into_iter()
        .filter_map(|(i, j, _)| {
            let shortfall = swaps[j * n + i] - swaps[i * n + j];
            (shortfall > tol).then_some(SwapWitness { i, j, shortfall })
        })
        .collect()
}

/// Check local stability exactly. Returns the verdict plus every candidate
/// whose expected marginal contribution exceeds `tol`.
pub fn check_local_stability(
    oracle: &ExpectedUtilityOracle,
    pi: &Policy,
    pop: &Population,
    tol: f64,
) -> Result<(bool, Vec<LocalWitness>)> {
    let emc = emc_exact(oracle, pi, pop)?;
    let witnesses = local_witnesses(&emc.values, tol);
    Ok((witnesses.is_empty(), witnesses))
}

fn local_witnesses(emc: &[f64], tol: f64) -> Vec<LocalWitness> {
    emc.iter()
        .enumerate()
        .filter_map(|(i, g)| (*g > tol).then_some(LocalWitness { i, gain: *g }))
        .collect()
}

/// Swap deviation, exactly and with zero tolerance: over every ordered pair
/// with a strictly positive marginal gap, the gap times the positive part of
/// the swap shortfall.
pub fn dev_swap(oracle: &ExpectedUtilityOracle, pi: &Policy, pop: &Population) -> Result<f64> {
    let (_, _, swaps) = exact_moments(oracle, pi, pop)?;
    let marginals = pi.marginals(pop)?;
    Ok(dev_swap_from_matrix(&marginals, &swaps, oracle.n(), 0.0))
}

fn dev_swap_from_matrix(marginals: &[f64], swaps: &[f64], n: usize, tol: f64) -> f64 {
    preferred_pairs(marginals, tol)
        .into_iter()
        .map(|(i, j, pref)| {
            let shortfall = swaps[j * n + i] - swaps[i * n + j];
            if shortfall > tol {
                pref * shortfall
            } else {
                0.0
            }
        })
        .sum()
}

/// Local deviation, exactly and with zero tolerance: the sum of positive
/// expected marginal contributions.
pub fn dev_local(oracle: &ExpectedUtilityOracle, pi: &Policy, pop: &Population) -> Result<f64> {
    let emc = emc_exact(oracle, pi, pop)?;
    Ok(dev_local_from_emc(&emc.values, 0.0))
}

fn dev_local_from_emc(emc: &[f64], tol: f64) -> f64 {
    emc.iter().map(|g| if *g > tol { *g } else { 0.0 }).sum()
}

/// Full exact stability audit: expected utility, both stability verdicts,
/// and both deviations. Deviations only count violations above `tol`, so a
/// policy judged stable always reports a deviation of exactly zero.
pub fn audit(
    oracle: &ExpectedUtilityOracle,
    pi: &Policy,
    pop: &Population,
    policy_id: &str,
    tol: f64,
) -> Result<AuditReport> {
    let n = oracle.n();
    let (utility, emc, swaps) = exact_moments(oracle, pi, pop)?;
    let marginals = pi.marginals(pop)?;
    let swap_viol = swap_witnesses(&marginals, &swaps, n, tol);
    let local_viol = local_witnesses(&emc, tol);
    let swap_stable = swap_viol.is_empty();
    let local_stable = local_viol.is_empty();
    Ok(AuditReport {
        policy_id: policy_id.to_string(),
        utility,
        dev_swap: dev_swap_from_matrix(&marginals, &swaps, n, tol),
        dev_local: dev_local_from_emc(&emc, tol),
        swap_stable: Some(swap_stable),
        local_stable: Some(local_stable),
        meritocratic: Some(swap_stable && local_stable),
        dev_swap_stderr: None,
        dev_local_stderr: None,
    })
}

/// Monte Carlo stability audit for policies too large to enumerate. All
/// quantities share one stream of drawn subsets; marginals are computed
/// exactly from the policy. Boolean verdicts are withheld (`None`) because a
/// sampled deviation near zero cannot certify stability; the deviations
/// carry delta-method standard errors instead.
pub fn audit_sampled(
    oracle: &ExpectedUtilityOracle,
    pi: &Policy,
    pop: &Population,
    policy_id: &str,
    tol: f64,
    samples: usize,
    seed: u64,
) -> Result<AuditReport> {
    if samples == 0 {
        return Err(Error::Argument("sampled audits need at least one draw".into()));
    }
    let n = oracle.n();
    if pop.len() != n {
        return Err(Error::Dimension(format!(
            "population of {} candidates for an oracle over {n}",
            pop.len()
        )));
    }
    let marginals = pi.marginals(pop)?;
    let pairs = preferred_pairs(&marginals, tol);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u_sum = 0.0;
    let mut emc_sum = vec![0.0; n];
    let mut emc_sumsq = vec![0.0; n];
    let mut pair_sum = vec![0.0; pairs.len()];
    let mut pair_sumsq = vec![0.0; pairs.len()];
    for _ in 0..samples {
        let a = pi.sample(pop, &mut rng)?;
        let base = oracle.expected_set_utility(&a)?;
        u_sum += base;
        let (with_i, _) = oracle.inclusion_values(&a)?;
        for i in 0..n {
            let d = if a.contains(i) { 0.0 } else { with_i[i] - base };
            emc_sum[i] += d;
            emc_sumsq[i] += d * d;
        }
        let swaps = oracle.swap_values(&a)?;
        for (k, (i, j, _)) in pairs.iter().enumerate() {
            let d = swaps[j * n + i] - swaps[i * n + j];
            pair_sum[k] += d;
            pair_sumsq[k] += d * d;
        }
    }

    let nf = samples as f64;
    let emc_hat: Vec<f64> = emc_sum.iter().map(|s| s / nf).collect();
    let dev_local = dev_local_from_emc(&emc_hat, tol);
    let dev_local_var: f64 = (0..n)
        .filter(|i| emc_hat[*i] > tol)
        .map(|i| stderr_from_moments(emc_sum[i], emc_sumsq[i], samples).powi(2))
        .sum();

    let mut dev_swap = 0.0;
    let mut dev_swap_var = 0.0;
    for (k, (_, _, pref)) in pairs.iter().enumerate() {
        let shortfall = pair_sum[k] / nf;
        if shortfall > tol {
            dev_swap += pref * shortfall;
            let se = stderr_from_moments(pair_sum[k], pair_sumsq[k], samples);
            dev_swap_var += (pref * se).powi(2);
        }
    }

    Ok(AuditReport {
        policy_id: policy_id.to_string(),
        utility: u_sum / nf,
        dev_swap,
        dev_local,
        swap_stable: None,
        local_stable: None,
        meritocratic: None,
        dev_swap_stderr: Some(dev_swap_var.sqrt()),
        dev_local_stderr: Some(dev_local_var.sqrt()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::Selection;
    use crate::utility::TabularUtility;

    fn pop(n: usize) -> Population {
        Population::new(
            (0..n).map(|i| i.to_string()).collect(),
            (0..n).map(|i| if i % 2 == 0 { "m".into() } else { "f".into() }).collect(),
            vec![vec![0.0]; n],
        )
        .unwrap()
    }

    #[test]
    fn deviations_are_nonnegative_and_zero_for_constant_utilities() {
        let oracle = ExpectedUtilityOracle::tabular(TabularUtility::new(3, vec![1.0; 8]).unwrap());
        let pi = Policy::separable_linear(vec![0.9, 0.5, 0.1]).unwrap();
        assert_eq!(dev_swap(&oracle, &pi, &pop(3)).unwrap(), 0.0);
        assert_eq!(dev_local(&oracle, &pi, &pop(3)).unwrap(), 0.0);
    }

    #[test]
    fn audit_flags_a_policy_ignoring_a_dominant_candidate() {
        // Candidate 0 is worth 1 alone, yet the policy always picks {1}.
        let mut table = vec![0.0; 4];
        table[0b01] = 1.0;
        table[0b11] = 1.0;
        let oracle = ExpectedUtilityOracle::tabular(TabularUtility::new(2, table).unwrap());
        let a = Selection::from_indices(2, &[1]).unwrap();
        let report = audit(&oracle, &Policy::deterministic(&a), &pop(2), "bad", 1e-9).unwrap();
        assert_eq!(report.local_stable, Some(false));
        assert_eq!(report.swap_stable, Some(false));
        assert_eq!(report.meritocratic, Some(false));
        assert!(report.dev_swap > 0.0);
        assert!(report.dev_local > 0.0);
    }
}
