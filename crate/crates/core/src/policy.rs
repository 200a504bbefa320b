//! Stochastic selection policies: subset probabilities, marginals, sampling,
//! and serialization for the supported families.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::Population;
use crate::selection::Selection;
use crate::util::{binomial, sigmoid};
use crate::utility::EXACT_ENUMERATION_LIMIT;

/// An explicit distribution over all 2^n subsets, indexed by mask.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    n: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    /// Build from subset probabilities; the length must be a power of two,
    /// entries nonnegative, and the total within 1e−9 of one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || !probs.len().is_power_of_two() {
            return Err(Error::Dimension(format!(
                "subset tables need a power-of-two length, got {}",
                probs.len()
            )));
        }
        let n = probs.len().trailing_zeros() as usize;
        if n > EXACT_ENUMERATION_LIMIT {
            return Err(Error::Capacity(format!(
                "explicit subset tables support at most {EXACT_ENUMERATION_LIMIT} candidates, got {n}"
            )));
        }
        if probs.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::Model("subset probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Model(format!(
                "subset probabilities must sum to 1 within 1e-9, got {total}"
            )));
        }
        Ok(TabularPolicy { n, probs })
    }

    /// Population size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// The subset distribution, indexed by mask.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Write as CSV with header `mask,prob`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["mask", "prob"])?;
        for (mask, p) in self.probs.iter().enumerate() {
            w.write_record([mask.to_string(), p.to_string()])?;
        }
        w.flush().map_err(Error::Io)?;
        Ok(())
    }

    /// Read a distribution written by [`TabularPolicy::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut probs = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let mask: usize = rec[0]
                .parse()
                .map_err(|e| Error::Parse(format!("row {} mask: {e}", line + 2)))?;
            if mask != probs.len() {
                return Err(Error::Parse(format!(
                    "row {}: masks must be contiguous from 0, got {mask}",
                    line + 2
                )));
            }
            probs.push(
                rec[1]
                    .parse()
                    .map_err(|e| Error::Parse(format!("row {} prob: {e}", line + 2)))?,
            );
        }
        TabularPolicy::new(probs)
    }
}

/// Independent per-candidate selection probabilities ("separable linear").
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparableLinearPolicy {
    theta: Vec<f64>,
}

impl SeparableLinearPolicy {
    /// The per-candidate selection probabilities.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
}

/// Exponential-family policy over subsets: π(a) ∝ exp(β·θᵀa).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    theta: Vec<f64>,
    beta: f64,
}

impl SoftmaxPolicy {
    /// Per-candidate scores.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Inverse temperature.
    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Feature-based policy: each candidate is selected independently with
/// probability σ(θᵀx_i).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticThresholdPolicy {
    theta: Vec<f64>,
}

impl LogisticThresholdPolicy {
    /// Feature weights.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Selection probability of a candidate with features `x`.
    pub fn marginal_for(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.theta.len() {
            return Err(Error::Dimension(format!(
                "candidate has {} features but the policy has {} weights",
                x.len(),
                self.theta.len()
            )));
        }
        let z: f64 = self.theta.iter().zip(x).map(|(t, v)| t * v).sum();
        Ok(sigmoid(z))
    }
}

/// A stochastic (or degenerate) selection policy.
#[derive(Clone, Debug)]
pub enum Policy {
    /// Explicit subset distribution.
    Tabular(TabularPolicy),
    /// Independent Bernoulli(θ_i) selection.
    SeparableLinear(SeparableLinearPolicy),
    /// Subset softmax with inverse temperature β.
    Softmax(SoftmaxPolicy),
    /// Independent selection by a logistic score of the features.
    LogisticThreshold(LogisticThresholdPolicy),
    /// Point mass on one subset.
    Deterministic(Selection),
}

impl Policy {
    /// Independent Bernoulli policy; probabilities must lie in [0, 1].
    pub fn separable_linear(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Model("selection probabilities must lie in [0, 1]".into()));
        }
        Ok(Policy::SeparableLinear(SeparableLinearPolicy { theta }))
    }

    /// Subset softmax with candidate scores `theta` and inverse temperature
    /// `beta`.
    pub fn softmax(theta: Vec<f64>, beta: f64) -> Result<Self> {
        if !beta.is_finite() || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Model("softmax parameters must be finite".into()));
        }
        Ok(Policy::Softmax(SoftmaxPolicy { theta, beta }))
    }

    /// Logistic-threshold policy with feature weights `theta`.
    pub fn logistic_threshold(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Model("threshold weights must be nonempty and finite".into()));
        }
        Ok(Policy::LogisticThreshold(LogisticThresholdPolicy { theta }))
    }

    /// Point mass on the given subset.
    pub fn deterministic(a: &Selection) -> Self {
        Policy::Deterministic(a.clone())
    }

    /// The uniform distribution over all 2^n subsets, realized as
    /// independent Bernoulli(1/2) draws.
    pub fn uniform(n: usize) -> Self {
        Policy::SeparableLinear(SeparableLinearPolicy { theta: vec![0.5; n] })
    }

    /// Short family label for reports.
    pub fn family_name(&self) -> &'static str {
        match self {
            Policy::Tabular(_) => "tabular",
            Policy::SeparableLinear(_) => "separable_linear",
            Policy::Softmax(_) => "softmax",
            Policy::LogisticThreshold(_) => "logistic_threshold",
            Policy::Deterministic(_) => "deterministic",
        }
    }

    /// The population size required by this policy, where intrinsic; the
    /// threshold family works for any population of matching feature width.
    fn check_population(&self, pop: &Population) -> Result<()> {
        let required = match self {
            Policy::Tabular(p) => Some(p.n()),
            Policy::SeparableLinear(p) => Some(p.theta.len()),
            Policy::Softmax(p) => Some(p.theta.len()),
            Policy::Deterministic(a) => Some(a.len()),
            Policy::LogisticThreshold(p) => {
                if p.theta.len() != pop.dim() {
                    return Err(Error::Dimension(format!(
                        "threshold policy has {} weights but features have width {}",
                        p.theta.len(),
                        pop.dim()
                    )));
                }
                None
            }
        };
        if let Some(n) = required {
            if n != pop.len() {
                return Err(Error::Dimension(format!(
                    "policy over {n} candidates applied to a population of {}",
                    pop.len()
                )));
            }
        }
        Ok(())
    }

    /// Probability assigned to one subset.
    pub fn prob_of_set(&self, a: &Selection, pop: &Population) -> Result<f64> {
        self.check_population(pop)?;
        if a.len() != pop.len() {
            return Err(Error::Dimension(format!(
                "selection over {} candidates for a population of {}",
                a.len(),
                pop.len()
            )));
        }
        match self {
            Policy::Tabular(p) => Ok(p.probs[a.mask()? as usize]),
            Policy::SeparableLinear(p) => {
                let mut prob = 1.0;
                for (i, t) in p.theta.iter().enumerate() {
                    prob *= if a.contains(i) { *t } else { 1.0 - t };
                }
                Ok(prob)
            }
            Policy::Softmax(p) => {
                let n = p.theta.len();
                if n > EXACT_ENUMERATION_LIMIT {
                    return Err(Error::Capacity(format!(
                        "softmax normalization enumerates 2^n subsets; n={n} exceeds {EXACT_ENUMERATION_LIMIT}"
                    )));
                }
                // Explicit normalizer over every subset; scores are shifted
                // by their maximum for stability.
                let mut dots = Vec::with_capacity(1usize << n);
                for mask in 0u64..(1 << n) {
                    let dot: f64 = (0..n)
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| p.theta[i])
                        .sum();
                    dots.push(p.beta * dot);
                }
                let top = dots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = dots.iter().map(|d| (d - top).exp()).sum();
                let dot: f64 = a.indices().map(|i| p.theta[i]).sum();
                Ok(((p.beta * dot - top).exp()) / z)
            }
            Policy::LogisticThreshold(p) => {
                let mut prob = 1.0;
                for i in 0..pop.len() {
                    let m = p.marginal_for(pop.feature_row(i))?;
                    prob *= if a.contains(i) { m } else { 1.0 - m };
                }
                Ok(prob)
            }
            Policy::Deterministic(sel) => Ok(if a == sel { 1.0 } else { 0.0 }),
        }
    }

    /// Marginal selection probability of candidate `i`.
    pub fn marginal_prob(&self, i: usize, pop: &Population) -> Result<f64> {
        self.check_population(pop)?;
        if i >= pop.len() {
            return Err(Error::Argument(format!(
                "candidate {i} out of range for population of {}",
                pop.len()
            )));
        }
        match self {
            Policy::Tabular(p) => {
                let mut total = 0.0;
                for (mask, prob) in p.probs.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        total += prob;
                    }
                }
                Ok(total)
            }
            Policy::SeparableLinear(p) => Ok(p.theta[i]),
            // The subset softmax with linear scores factorizes into
            // independent Bernoulli(σ(β·θ_i)) coordinates, so the marginal
            // has a closed form.
            Policy::Softmax(p) => Ok(sigmoid(p.beta * p.theta[i])),
            Policy::LogisticThreshold(p) => p.marginal_for(pop.feature_row(i)),
            Policy::Deterministic(sel) => Ok(if sel.contains(i) { 1.0 } else { 0.0 }),
        }
    }

    /// All marginal selection probabilities.
    pub fn marginals(&self, pop: &Population) -> Result<Vec<f64>> {
        (0..pop.len()).map(|i| self.marginal_prob(i, pop)).collect()
    }

    /// Draw one subset.
    pub fn sample<R: Rng + ?Sized>(&self, pop: &Population, rng: &mut R) -> Result<Selection> {
        self.check_population(pop)?;
        match self {
            Policy::Tabular(p) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut chosen = p.probs.len() - 1;
                for (mask, prob) in p.probs.iter().enumerate() {
                    acc += prob;
                    if u < acc {
                        chosen = mask;
                        break;
                    }
                }
                Selection::from_mask(p.n, chosen as u64)
            }
            Policy::SeparableLinear(p) => {
                let mut a = Selection::empty(pop.len());
                for (i, t) in p.theta.iter().enumerate() {
                    if rng.gen::<f64>() < *t {
                        a.insert(i);
                    }
                }
                Ok(a)
            }
            Policy::Softmax(p) => {
                let mut a = Selection::empty(pop.len());
                for (i, t) in p.theta.iter().enumerate() {
                    if rng.gen::<f64>() < sigmoid(p.beta * t) {
                        a.insert(i);
                    }
                }
                Ok(a)
            }
            Policy::LogisticThreshold(p) => {
                let mut a = Selection::empty(pop.len());
                for i in 0..pop.len() {
                    if rng.gen::<f64>() < p.marginal_for(pop.feature_row(i))? {
                        a.insert(i);
                    }
                }
                Ok(a)
            }
            Policy::Deterministic(sel) => Ok(sel.clone()),
        }
    }

    /// Mean selection probability over a set of candidate indices.
    pub fn group_selection_rate(&self, indices: &[usize], pop: &Population) -> Result<f64> {
        if indices.is_empty() {
            return Err(Error::Argument("group selection rate of an empty group".into()));
        }
        let mut total = 0.0;
        for &i in indices {
            total += self.marginal_prob(i, pop)?;
        }
        Ok(total / indices.len() as f64)
    }

    /// Serialize the policy parameters as JSON.
    pub fn to_json(&self) -> Result<String> {
        let repr = match self {
            Policy::Tabular(p) => PolicyRepr::Tabular { probs: p.probs.clone() },
            Policy::SeparableLinear(p) => PolicyRepr::SeparableLinear { theta: p.theta.clone() },
            Policy::Softmax(p) => PolicyRepr::Softmax { theta: p.theta.clone(), beta: p.beta },
            Policy::LogisticThreshold(p) => {
                PolicyRepr::LogisticThreshold { theta: p.theta.clone() }
            }
            Policy::Deterministic(a) => PolicyRepr::Deterministic {
                n: a.len(),
                selected: a.indices().collect(),
            },
        };
        Ok(serde_json::to_string_pretty(&repr)?)
    }

    /// Parse a policy serialized by [`Policy::to_json`], re-validating all
    /// invariants.
    pub fn from_json(text: &str) -> Result<Self> {
        let repr: PolicyRepr = serde_json::from_str(text)?;
        match repr {
            PolicyRepr::Tabular { probs } => Ok(Policy::Tabular(TabularPolicy::new(probs)?)),
            PolicyRepr::SeparableLinear { theta } => Policy::separable_linear(theta),
            PolicyRepr::Softmax { theta, beta } => Policy::softmax(theta, beta),
            PolicyRepr::LogisticThreshold { theta } => Policy::logistic_threshold(theta),
            PolicyRepr::Deterministic { n, selected } => {
                Ok(Policy::Deterministic(Selection::from_indices(n, &selected)?))
            }
        }
    }

    /// Explicit support when the policy concentrates on finitely many
    /// enumerable subsets without a capacity limit: point masses and tabular
    /// distributions. `None` for parametric families.
    pub(crate) fn small_support(&self) -> Option<Vec<(Selection, f64)>> {
        match self {
            Policy::Deterministic(a) => Some(vec![(a.clone(), 1.0)]),
            Policy::Tabular(p) => {
                let mut support = Vec::new();
                for (mask, prob) in p.probs.iter().enumerate() {
                    if *prob > 0.0 {
                        support.push((
                            Selection::from_mask(p.n, mask as u64).expect("valid mask"),
                            *prob,
                        ));
                    }
                }
                Some(support)
            }
            _ => None,
        }
    }

    /// The full subset distribution, indexed by mask; requires n within the
    /// exact-enumeration limit.
    pub(crate) fn subset_distribution(&self, pop: &Population) -> Result<Vec<f64>> {
        self.check_population(pop)?;
        let n = pop.len();
        if n > EXACT_ENUMERATION_LIMIT {
            return Err(Error::Capacity(format!(
                "exact evaluation enumerates 2^n subsets; n={n} exceeds {EXACT_ENUMERATION_LIMIT}"
            )));
        }
        match self {
            Policy::Tabular(p) => Ok(p.probs.clone()),
            Policy::Deterministic(a) => {
                let mut probs = vec![0.0; 1 << n];
                probs[a.mask()? as usize] = 1.0;
                Ok(probs)
            }
            Policy::Softmax(p) => {
                let mut weights = Vec::with_capacity(1usize << n);
                let mut top = f64::NEG_INFINITY;
                for mask in 0u64..(1 << n) {
                    let dot: f64 = (0..n)
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| p.theta[i])
                        .sum();
                    let s = p.beta * dot;
                    top = top.max(s);
                    weights.push(s);
                }
                let mut z = 0.0;
                for w in weights.iter_mut() {
                    *w = (*w - top).exp();
                    z += *w;
                }
                Ok(weights.into_iter().map(|w| w / z).collect())
            }
            // Product-form families share one loop over per-candidate
            // marginals.
            Policy::SeparableLinear(_) | Policy::LogisticThreshold(_) => {
                let marg = self.marginals(pop)?;
                let mut probs = Vec::with_capacity(1usize << n);
                for mask in 0u64..(1 << n) {
                    let mut prob = 1.0;
                    for (i, m) in marg.iter().enumerate() {
                        prob *= if mask & (1 << i) != 0 { *m } else { 1.0 - m };
                    }
                    probs.push(prob);
                }
                Ok(probs)
            }
        }
    }
}

/// Serialized form of a policy, tagged by family.
#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
enum PolicyRepr {
    Tabular { probs: Vec<f64> },
    SeparableLinear { theta: Vec<f64> },
    Softmax { theta: Vec<f64>, beta: f64 },
    LogisticThreshold { theta: Vec<f64> },
    Deterministic { n: usize, selected: Vec<usize> },
}

/// The per-size subset weighting under which expected marginal contributions
/// coincide with Shapley values: w(a) = 1 / (N · C(N−1, |a|)) for |a| < N and
/// 0 for the full set. Deliberately unnormalized — the total mass is the N-th
/// harmonic number — so it is exposed as a weighting, not a policy.
#[derive(Clone, Debug)]
pub struct ShapleyWeighting {
    n: usize,
}

impl ShapleyWeighting {
    /// Weighting for an n-candidate population.
    pub fn new(n: usize) -> Self {
        ShapleyWeighting { n }
    }

    /// Population size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Weight of one subset.
    pub fn weight(&self, a: &Selection) -> f64 {
        let k = a.count();
        if k >= self.n {
            return 0.0;
        }
        1.0 / (self.n as f64 * binomial(self.n - 1, k))
    }
}
