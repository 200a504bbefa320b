//! Expected utilities of sets and policies, exactly or by Monte Carlo.
//!
//! The oracle marginalizes a set-utility function over an outcome
//! distribution, and a policy's utility over its subset distribution. Exact
//! policy evaluation enumerates subsets and is therefore limited to small
//! populations, except for policies with small explicit support (point
//! masses, tabular distributions), which evaluate exactly at any size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::outcome::{OutcomeMatrix, OutcomeModel};
use crate::policy::Policy;
use crate::population::Population;
use crate::selection::{Force, Selection};
use crate::util::stderr_from_moments;
use crate::utility::{TabularUtility, UtilityFunction, EXACT_ENUMERATION_LIMIT};

/// How a policy-level expectation is computed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvalMode {
    /// Enumerate the policy's subset distribution (or its explicit support).
    Exact,
    /// Average over `n` subsets drawn with a fresh seeded generator.
    Sampled { n: usize, seed: u64 },
}

/// A Monte Carlo estimate with its standard error. The standard error is
/// infinite when fewer than two samples were drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    /// Sample mean.
    pub value: f64,
    /// Standard error of the mean.
    pub stderr: f64,
}

/// The evaluation backend: either a raw subset table, or a utility function
/// paired with a (possibly mixed) outcome distribution.
enum Inner {
    Tabular(TabularUtility),
    Atoms {
        u: UtilityFunction,
        atoms: Vec<(OutcomeMatrix, f64)>,
    },
}

/// Expected set and policy utilities for one population.
pub struct ExpectedUtilityOracle {
    n: usize,
    inner: Inner,
}

impl ExpectedUtilityOracle {
    /// Oracle reading utilities straight from an explicit subset table.
    pub fn tabular(table: TabularUtility) -> Self {
        let n = table.n();
        ExpectedUtilityOracle { n, inner: Inner::Tabular(table) }
    }

    /// Oracle combining a utility function with an outcome model over the
    /// given population. Mixture models are kept as separate atoms so that
    /// nonlinear utilities average correctly.
    pub fn new(u: UtilityFunction, model: OutcomeModel, pop: &Population) -> Result<Self> {
        model.validate(pop)?;
        if let UtilityFunction::Tabular(table) = u {
            if table.n() != pop.len() {
                return Err(Error::Dimension(format!(
                    "utility table for {} candidates used with a population of {}",
                    table.n(),
                    pop.len()
                )));
            }
            return Ok(ExpectedUtilityOracle::tabular(table));
        }
        let atoms = match model {
            OutcomeModel::Table(y) => vec![(y, 1.0)],
            OutcomeModel::Linear(m) => vec![(m.predict(pop)?, 1.0)],
            OutcomeModel::Mixture(atoms) => atoms,
        };
        Ok(ExpectedUtilityOracle { n: pop.len(), inner: Inner::Atoms { u, atoms } })
    }

    /// Population size the oracle evaluates over.
    pub fn n(&self) -> usize {
        self.n
    }

    fn check_selection(&self, a: &Selection) -> Result<()> {
        if a.len() != self.n {
            return Err(Error::Dimension(format!(
                "selection over {} candidates for an oracle over {}",
                a.len(),
                self.n
            )));
        }
        Ok(())
    }

    fn check_population(&self, pop: &Population) -> Result<()> {
        if pop.len() != self.n {
            return Err(Error::Dimension(format!(
                "population of {} candidates for an oracle over {}",
                pop.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// Expected utility of one fixed subset.
    pub fn expected_set_utility(&self, a: &Selection) -> Result<f64> {
        self.check_selection(a)?;
        match &self.inner {
            Inner::Tabular(t) => t.value(a),
            Inner::Atoms { u, atoms } => {
                let mut total = 0.0;
                for (y, w) in atoms {
                    total += w * u.set_utility(a, y)?;
                }
                Ok(total)
            }
        }
    }

    /// Expected utilities of every subset, indexed by mask; restricted to
    /// enumerable populations.
    pub fn value_table(&self) -> Result<Vec<f64>> {
        if self.n > EXACT_ENUMERATION_LIMIT {
            return Err(Error::Capacity(format!(
                "full subset tables enumerate 2^n values; n={} exceeds {EXACT_ENUMERATION_LIMIT}",
                self.n
            )));
        }
        match &self.inner {
            Inner::Tabular(t) => Ok(t.values().to_vec()),
            Inner::Atoms { u, atoms } => {
                let size = 1usize << self.n;
                let mut table = vec![0.0; size];
                for (y, w) in atoms {
                    for (mask, slot) in table.iter_mut().enumerate() {
                        *slot += w * value_of_mask(u, mask as u64, self.n, y);
                    }
                }
                Ok(table)
            }
        }
    }

    /// Per-candidate gains `U(a ∪ {i}) − U(a)`; zero for members of `a`.
    pub fn marginal_gains(&self, a: &Selection) -> Result<Vec<f64>> {
        self.check_selection(a)?;
        match &self.inner {
            Inner::Tabular(t) => {
                let mask = a.mask()?;
                let base = t.values()[mask as usize];
                Ok((0..self.n)
                    .map(|i| t.values()[(mask | (1 << i)) as usize] - base)
                    .collect())
            }
            Inner::Atoms { u, atoms } => {
                let mut gains = vec![0.0; self.n];
                for (y, w) in atoms {
                    let part = atom_gains(u, a, y)?;
                    for (g, p) in gains.iter_mut().zip(part) {
                        *g += w * p;
                    }
                }
                Ok(gains)
            }
        }
    }

    /// The n×n matrix of post-swap utilities in row-major order: entry
    /// `[i*n + j]` is `U((a ∪ {i}) \ {j})`. The diagonal therefore holds
    /// `U(a \ {i})`.
    pub fn swap_values(&self, a: &Selection) -> Result<Vec<f64>> {
        self.check_selection(a)?;
        match &self.inner {
            Inner::Tabular(t) => {
                let mask = a.mask()?;
                let mut out = vec![0.0; self.n * self.n];
                for i in 0..self.n {
                    let with_i = mask | (1 << i);
                    for j in 0..self.n {
                        out[i * self.n + j] = t.values()[(with_i & !(1u64 << j)) as usize];
                    }
                }
                Ok(out)
            }
            Inner::Atoms { u, atoms } => {
                let mut out = vec![0.0; self.n * self.n];
                for (y, w) in atoms {
                    let part = atom_swaps(u, a, y)?;
                    for (o, p) in out.iter_mut().zip(part) {
                        *o += w * p;
                    }
                }
                Ok(out)
            }
        }
    }

    /// Per-candidate inclusion and exclusion utilities:
    /// `(U(a ∪ {i}), U(a \ {i}))` for every `i`.
    pub fn inclusion_values(&self, a: &Selection) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_selection(a)?;
        match &self.inner {
            Inner::Tabular(t) => {
                let mask = a.mask()?;
                let mut with_i = Vec::with_capacity(self.n);
                let mut without_i = Vec::with_capacity(self.n);
                for i in 0..self.n {
                    with_i.push(t.values()[(mask | (1 << i)) as usize]);
                    without_i.push(t.values()[(mask & !(1u64 << i)) as usize]);
                }
                Ok((with_i, without_i))
            }
            Inner::Atoms { u, atoms } => {
                let mut with_i = vec![0.0; self.n];
                let mut without_i = vec![0.0; self.n];
                for (y, w) in atoms {
                    let (wi, wo) = atom_inclusion(u, a, y)?;
                    for k in 0..self.n {
                        with_i[k] += w * wi[k];
                        without_i[k] += w * wo[k];
                    }
                }
                Ok((with_i, without_i))
            }
        }
    }

    /// Expected utility under a policy.
    pub fn policy_utility(&self, pi: &Policy, pop: &Population, mode: EvalMode) -> Result<f64> {
        self.forced_policy_utility_inner(pi, pop, None, mode)
    }

    /// Monte Carlo estimate of the policy utility with its standard error.
    pub fn policy_utility_estimate(
        &self,
        pi: &Policy,
        pop: &Population,
        samples: usize,
        seed: u64,
    ) -> Result<Estimate> {
        self.check_population(pop)?;
        let (value, stderr) = self.sampled_moments(pi, pop, None, samples, seed)?;
        Ok(Estimate { value, stderr })
    }

    /// Expected utility when every drawn subset is transformed by `force`
    /// before evaluation: forced-in candidates added, forced-out removed.
    pub fn forced_policy_utility(
        &self,
        pi: &Policy,
        pop: &Population,
        force: &Force,
        mode: EvalMode,
    ) -> Result<f64> {
        self.forced_policy_utility_inner(pi, pop, Some(force), mode)
    }

    fn forced_policy_utility_inner(
        &self,
        pi: &Policy,
        pop: &Population,
        force: Option<&Force>,
        mode: EvalMode,
    ) -> Result<f64> {
        self.check_population(pop)?;
        if let Some(f) = force {
            for &i in f.include().iter().chain(f.exclude()) {
                if i >= self.n {
                    return Err(Error::Argument(format!(
                        "forced candidate {i} out of range for population of {}",
                        self.n
                    )));
                }
            }
        }
        match mode {
            EvalMode::Exact => {
                if let Some(support) = pi.small_support() {
                    let mut total = 0.0;
                    for (a, p) in support {
                        let a = match force {
                            Some(f) => a.forced(f),
                            None => a,
                        };
                        total += p * self.expected_set_utility(&a)?;
                    }
                    return Ok(total);
                }
                let probs = pi.subset_distribution(pop)?;
                let table = self.value_table()?;
                let (inc, exc) = match force {
                    Some(f) => {
                        let inc = f.include().iter().fold(0u64, |m, &i| m | (1 << i));
                        let exc = f.exclude().iter().fold(0u64, |m, &i| m | (1 << i));
                        (inc, exc)
                    }
                    None => (0, 0),
                };
                let mut total = 0.0;
                for (mask, p) in probs.iter().enumerate() {
                    if *p == 0.0 {
                        continue;
                    }
                    let m = (mask as u64 | inc) & !exc;
                    total += p * table[m as usize];
                }
                Ok(total)
            }
            EvalMode::Sampled { n, seed } => {
                let (mean, _) = self.sampled_moments(pi, pop, force, n, seed)?;
                Ok(mean)
            }
        }
    }

    /// Shared sampling loop; returns the sample mean and its standard error.
    fn sampled_moments(
        &self,
        pi: &Policy,
        pop: &Population,
        force: Option<&Force>,
        samples: usize,
        seed: u64,
    ) -> Result<(f64, f64)> {
        if samples == 0 {
            return Err(Error::Argument("sampled evaluation needs at least one draw".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..samples {
            let mut a = pi.sample(pop, &mut rng)?;
            if let Some(f) = force {
                a = a.forced(f);
            }
            let v = self.expected_set_utility(&a)?;
            sum += v;
            sumsq += v * v;
        }
        Ok((sum / samples as f64, stderr_from_moments(sum, sumsq, samples)))
    }
}

/// Set utility of a mask-encoded subset without building a `Selection`.
fn value_of_mask(u: &UtilityFunction, mask: u64, n: usize, y: &OutcomeMatrix) -> f64 {
    match u {
        UtilityFunction::Tabular(t) => t.values()[mask as usize],
        UtilityFunction::Linear { cost } => {
            let mut total = 0.0;
            for i in 0..n {
                if mask & (1 << i) != 0 {
                    total += y.row_mean(i) - cost;
                }
            }
            total
        }
        UtilityFunction::LogLinear { cost, floor } => {
            let mut total = 0.0;
            let mut count = 0usize;
            for j in 0..y.cols() {
                let mut s = 0.0;
                for i in 0..n {
                    if mask & (1 << i) != 0 {
                        s += y.get(i, j);
                    }
                }
                total += s.max(*floor).ln();
            }
            for i in 0..n {
                if mask & (1 << i) != 0 {
                    count += 1;
                }
            }
            total - cost * count as f64
        }
    }
}

/// Column totals of `y` over the members of `a`.
fn column_sums(a: &Selection, y: &OutcomeMatrix) -> Vec<f64> {
    let mut sums = vec![0.0; y.cols()];
    for i in a.indices() {
        for (j, s) in sums.iter_mut().enumerate() {
            *s += y.get(i, j);
        }
    }
    sums
}

/// Marginal gains for one outcome atom, in O(m) per candidate.
fn atom_gains(u: &UtilityFunction, a: &Selection, y: &OutcomeMatrix) -> Result<Vec<f64>> {
    let n = a.len();
    match u {
        UtilityFunction::Tabular(t) => {
            let mask = a.mask()?;
            let base = t.values()[mask as usize];
            Ok((0..n).map(|i| t.values()[(mask | (1 << i)) as usize] - base).collect())
        }
        UtilityFunction::Linear { cost } => Ok((0..n)
            .map(|i| if a.contains(i) { 0.0 } else { y.row_mean(i) - cost })
            .collect()),
        UtilityFunction::LogLinear { cost, floor } => {
            let sums = column_sums(a, y);
            let base_ln: Vec<f64> = sums.iter().map(|s| s.max(*floor).ln()).collect();
            let mut gains = vec![0.0; n];
            for (i, g) in gains.iter_mut().enumerate() {
                if a.contains(i) {
                    continue;
                }
                let mut d = -cost;
                for j in 0..y.cols() {
                    d += (sums[j] + y.get(i, j)).max(*floor).ln() - base_ln[j];
                }
                *g = d;
            }
            Ok(gains)
        }
    }
}

/// Post-swap utilities for one outcome atom, in O(m) per pair.
fn atom_swaps(u: &UtilityFunction, a: &Selection, y: &OutcomeMatrix) -> Result<Vec<f64>> {
    let n = a.len();
    match u {
        UtilityFunction::Tabular(t) => {
            let mask = a.mask()?;
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                let with_i = mask | (1 << i);
                for j in 0..n {
                    out[i * n + j] = t.values()[(with_i & !(1u64 << j)) as usize];
                }
            }
            Ok(out)
        }
        UtilityFunction::Linear { cost } => {
            let weights: Vec<f64> = (0..n).map(|i| y.row_mean(i) - cost).collect();
            let base: f64 = a.indices().map(|i| weights[i]).sum();
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                let incl = if a.contains(i) { 0.0 } else { weights[i] };
                for j in 0..n {
                    // j is always a member of a ∪ {i} when j == i.
                    let excl = if a.contains(j) || j == i { weights[j] } else { 0.0 };
                    out[i * n + j] = base + incl - excl;
                }
            }
            Ok(out)
        }
        UtilityFunction::LogLinear { cost, floor } => {
            let sums = column_sums(a, y);
            let count = a.count();
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                let in_a_i = a.contains(i);
                for j in 0..n {
                    let j_in_union = a.contains(j) || j == i;
                    let mut total = 0.0;
                    for c in 0..y.cols() {
                        let mut s = sums[c];
                        if !in_a_i {
                            s += y.get(i, c);
                        }
                        if j_in_union {
                            s -= y.get(j, c);
                        }
                        total += s.max(*floor).ln();
                    }
                    let members =
                        count + usize::from(!in_a_i) - usize::from(j_in_union);
                    out[i * n + j] = total - cost * members as f64;
                }
            }
            Ok(out)
        }
    }
}

/// Inclusion/exclusion utilities for one outcome atom, in O(m) per candidate.
fn atom_inclusion(
    u: &UtilityFunction,
    a: &Selection,
    y: &OutcomeMatrix,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.len();
    match u {
        UtilityFunction::Tabular(t) => {
            let mask = a.mask()?;
            let mut with_i = Vec::with_capacity(n);
            let mut without_i = Vec::with_capacity(n);
            for i in 0..n {
                with_i.push(t.values()[(mask | (1 << i)) as usize]);
                without_i.push(t.values()[(mask & !(1u64 << i)) as usize]);
            }
            Ok((with_i, without_i))
        }
        UtilityFunction::Linear { cost } => {
            let weights: Vec<f64> = (0..n).map(|i| y.row_mean(i) - cost).collect();
            let base: f64 = a.indices().map(|i| weights[i]).sum();
            let mut with_i = Vec::with_capacity(n);
            let mut without_i = Vec::with_capacity(n);
            for i in 0..n {
                if a.contains(i) {
                    with_i.push(base);
                    without_i.push(base - weights[i]);
                } else {
                    with_i.push(base + weights[i]);
                    without_i.push(base);
                }
            }
            Ok((with_i, without_i))
        }
        UtilityFunction::LogLinear { cost, floor } => {
            let sums = column_sums(a, y);
            let count = a.count() as f64;
            let base: f64 =
                sums.iter().map(|s| s.max(*floor).ln()).sum::<f64>() - cost * count;
            let mut with_i = Vec::with_capacity(n);
            let mut without_i = Vec::with_capacity(n);
            for i in 0..n {
                if a.contains(i) {
                    let mut minus = 0.0;
                    for (j, s) in sums.iter().enumerate() {
                        minus += (s - y.get(i, j)).max(*floor).ln();
                    }
                    with_i.push(base);
                    without_i.push(minus - cost * (count - 1.0));
                } else {
                    let mut plus = 0.0;
                    for (j, s) in sums.iter().enumerate() {
                        plus += (s + y.get(i, j)).max(*floor).ln();
                    }
                    with_i.push(plus - cost * (count + 1.0));
                    without_i.push(base);
                }
            }
            Ok((with_i, without_i))
        }
    }
}
