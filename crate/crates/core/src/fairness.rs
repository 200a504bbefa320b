//! Statistical parity between two candidate groups: gap, penalty terms,
//! penalty gradients, and a set-level parity filter.
//!
//! The parity gap of a policy is the absolute difference between the two
//! groups' mean selection probabilities. Constraints bound the gap by a
//! tolerance ε; penalties are built from the squared gap so they stay
//! differentiable through zero.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::population::Population;
use crate::selection::Selection;
use crate::util::sigmoid_prime;

/// Two disjoint, nonempty groups of candidate indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupPair {
    first: Vec<usize>,
    second: Vec<usize>,
}

impl GroupPair {
    /// Build a pair; both groups must be nonempty and disjoint.
    pub fn new(first: Vec<usize>, second: Vec<usize>) -> Result<Self> {
        if first.is_empty() || second.is_empty() {
            return Err(Error::Argument("both parity groups must be nonempty".into()));
        }
        for i in &first {
            if second.contains(i) {
                return Err(Error::Argument(format!(
                    "candidate {i} appears in both parity groups"
                )));
            }
        }
        Ok(GroupPair { first, second })
    }

    /// Split a population by its group labels; fails unless there are
    /// exactly two distinct labels.
    pub fn from_population(pop: &Population) -> Result<Self> {
        let labels = pop.distinct_groups();
        if labels.len() != 2 {
            return Err(Error::Argument(format!(
                "parity needs exactly two group labels, found {}",
                labels.len()
            )));
        }
        let first = (0..pop.len()).filter(|i| pop.group_label(*i) == labels[0]).collect();
        let second = (0..pop.len()).filter(|i| pop.group_label(*i) == labels[1]).collect();
        GroupPair::new(first, second)
    }

    /// Candidate indices of the first group.
    pub fn first_indices(&self) -> &[usize] {
        &self.first
    }

    /// Candidate indices of the second group.
    pub fn second_indices(&self) -> &[usize] {
        &self.second
    }
}

/// A parity constraint: the gap between the two groups' selection rates must
/// stay within `epsilon`.
#[derive(Clone, Debug)]
pub struct ParityConstraint {
    /// Largest tolerated parity gap.
    pub epsilon: f64,
    /// The two groups being compared.
    pub groups: GroupPair,
}

/// JSON shape accepted by [`ParityConstraint::from_json_config`].
#[derive(Deserialize)]
struct ParityConfig {
    epsilon: f64,
    group_attr: String,
}

impl ParityConstraint {
    /// Build a constraint; the tolerance must be nonnegative.
    pub fn new(epsilon: f64, groups: GroupPair) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::Argument(format!(
                "parity tolerance must be nonnegative, got {epsilon}"
            )));
        }
        Ok(ParityConstraint { epsilon, groups })
    }

    /// Parse the `{"epsilon": .., "group_attr": ..}` configuration shape and
    /// split the population by its group labels. The only supported group
    /// attribute is the population's label column (`"gender"` or `"group"`).
    pub fn from_json_config(text: &str, pop: &Population) -> Result<Self> {
        let cfg: ParityConfig = serde_json::from_str(text)?;
        if cfg.group_attr != "gender" && cfg.group_attr != "group" {
            return Err(Error::Argument(format!(
                "unknown group attribute {:?}; expected \"gender\" or \"group\"",
                cfg.group_attr
            )));
        }
        ParityConstraint::new(cfg.epsilon, GroupPair::from_population(pop)?)
    }
}

/// How a constraint enters an objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PenaltyMode {
    /// Raw residual `gap² − ε`, negative strictly inside the feasible region.
    Lagrangian,
    /// Pure squared gap `gap²`, zero exactly at parity.
    Penalty,
}

/// Absolute difference between the two groups' mean selection probabilities.
pub fn parity_gap(pi: &Policy, pop: &Population, groups: &GroupPair) -> Result<f64> {
    let r1 = pi.group_selection_rate(groups.first_indices(), pop)?;
    let r2 = pi.group_selection_rate(groups.second_indices(), pop)?;
    Ok((r1 - r2).abs())
}

/// Penalty value of a policy against a constraint under the given mode.
pub fn parity_penalty(
    pi: &Policy,
    pop: &Population,
    constraint: &ParityConstraint,
    mode: PenaltyMode,
) -> Result<f64> {
    let gap = parity_gap(pi, pop, &constraint.groups)?;
    let squared = gap * gap;
    Ok(match mode {
        PenaltyMode::Penalty => squared,
        PenaltyMode::Lagrangian => squared - constraint.epsilon,
    })
}

/// Gradient of the squared parity gap with respect to the per-candidate
/// marginal selection probabilities.
pub fn parity_penalty_marginal_gradient(
    marginals: &[f64],
    groups: &GroupPair,
) -> Result<Vec<f64>> {
    for &i in groups.first_indices().iter().chain(groups.second_indices()) {
        if i >= marginals.len() {
            return Err(Error::Argument(format!(
                "group index {i} out of range for {} marginals",
                marginals.len()
            )));
        }
    }
    let mean = |idx: &[usize]| idx.iter().map(|&i| marginals[i]).sum::<f64>() / idx.len() as f64;
    let d = mean(groups.first_indices()) - mean(groups.second_indices());
    let mut grad = vec![0.0; marginals.len()];
    let scale1 = 2.0 * d / groups.first_indices().len() as f64;
    for &i in groups.first_indices() {
        grad[i] = scale1;
    }
    let scale2 = -2.0 * d / groups.second_indices().len() as f64;
    for &i in groups.second_indices() {
        grad[i] = scale2;
    }
    Ok(grad)
}

/// Gradient of the squared parity gap with respect to the policy's own
/// parameter vector, obtained by chaining the marginal gradient through each
/// family's marginal map. Only parametric families are differentiable.
pub fn parity_penalty_gradient(
    pi: &Policy,
    pop: &Population,
    groups: &GroupPair,
) -> Result<Vec<f64>> {
    let marginals = pi.marginals(pop)?;
    let mg = parity_penalty_marginal_gradient(&marginals, groups)?;
    match pi {
        // Marginals are the parameters themselves.
        Policy::SeparableLinear(_) => Ok(mg),
        // Marginal of candidate i is σ(β·θ_i).
        Policy::Softmax(p) => Ok(p
            .theta()
            .iter()
            .zip(&mg)
            .map(|(t, g)| g * p.beta() * sigmoid_prime(p.beta() * t))
            .collect()),
        // Marginal of candidate i is σ(θᵀx_i); fan the chain out over the
        // feature dimensions.
        Policy::LogisticThreshold(p) => {
            let d = p.theta().len();
            let mut grad = vec![0.0; d];
            for (i, g) in mg.iter().enumerate() {
                if *g == 0.0 {
                    continue;
                }
                let x = pop.feature_row(i);
                let z: f64 = p.theta().iter().zip(x).map(|(t, v)| t * v).sum();
                let s = sigmoid_prime(z);
                for (slot, xv) in grad.iter_mut().zip(x) {
                    *slot += g * s * xv;
                }
            }
            Ok(grad)
        }
        Policy::Tabular(_) | Policy::Deterministic(_) => Err(Error::Argument(
            "parity gradients require a parametric policy family".into(),
        )),
    }
}

/// Whether one concrete selection satisfies the constraint: the absolute
/// difference between the groups' selected fractions stays within ε
/// (boundary included).
pub fn set_satisfies_parity(a: &Selection, constraint: &ParityConstraint) -> bool {
    let frac = |idx: &[usize]| {
        idx.iter().filter(|&&i| a.contains(i)).count() as f64 / idx.len() as f64
    };
    let gap = (frac(constraint.groups.first_indices())
        - frac(constraint.groups.second_indices()))
    .abs();
    gap <= constraint.epsilon
}
