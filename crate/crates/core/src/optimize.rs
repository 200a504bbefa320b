//! Policy search: analytic gradients for the parametric families, a
//! projected-ascent loop with an optional primal-dual parity constraint, and
//! the baseline selectors (stochastic greedy, top-k by score, uniform).
//!
//! Gradients are built from per-candidate forced inclusion/exclusion
//! utilities: for every family here the marginal map is coordinatewise, so
//! ∂U/∂(parameter) chains the difference U(π+i) − U(π−i) through the
//! family's marginal derivative. The form stays finite at saturated
//! marginals, unlikelihood-ratio estimators which blow up at the corners.

use std::cmp::Ordering;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fairness::{
    parity_gap, parity_penalty_gradient, set_satisfies_parity, ParityConstraint,
};
use crate::oracle::{EvalMode, ExpectedUtilityOracle};
use crate::policy::Policy;
use crate::population::Population;
use crate::selection::Selection;
use crate::util::{derive_seed, sigmoid_prime};

/// Iterates of the separable family are kept this far inside [0, 1] so that
/// every candidate retains a nonzero selection and rejection probability.
pub const MARGINAL_CLAMP: f64 = 1e-3;

/// How the dual variable of a constrained run is maintained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MultiplierMode {
    /// Nonnegative multiplier ascending on the violation (the standard
    /// primal-dual convention).
    #[default]
    Conventional,
    /// Nonpositive multiplier descending on the violation. Kept for
    /// comparison runs; with this sign the penalty term rewards violation,
    /// so it is not the default.
    NonpositiveLiteral,
}

/// Tuning knobs for the ascent loops.
#[derive(Clone, Debug)]
pub struct OptimizerConfig {
    /// Initial learning rate; zero freezes the policy.
    pub eta0: f64,
    /// Maximum number of ascent iterations.
    pub max_iters: usize,
    /// Stop once the parameter step norm falls to this value.
    pub delta: f64,
    /// Multiplicative learning-rate decay applied after a stall.
    pub eta_decay: f64,
    /// Number of non-improving iterations that counts as a stall.
    pub stall_window: usize,
    /// Sample count per gradient/utility estimate in sampled mode.
    pub mc_samples: usize,
    /// Master seed for sampled gradients and evaluations.
    pub seed: u64,
    /// Evaluate gradients and utilities exactly (small populations only).
    pub exact_gradient: bool,
    /// Dual-update convention for constrained runs.
    pub multiplier_mode: MultiplierMode,
    /// Initial dual variable for constrained runs.
    pub lambda0: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            eta0: 0.1,
            max_iters: 250,
            delta: 1e-6,
            eta_decay: 0.9,
            stall_window: 10,
            mc_samples: 40,
            seed: 0,
            exact_gradient: false,
            multiplier_mode: MultiplierMode::default(),
            lambda0: 0.0,
        }
    }
}

/// One recorded ascent iteration. `utility`, `penalty`, and `lambda`
/// describe the iterate *before* the step: `penalty` is the constraint
/// residual gap² − ε² (zero in unconstrained runs) and `lambda` the dual
/// variable prior to its update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceStep {
    /// Iteration index, starting at zero.
    pub iter: usize,
    /// Objective value of the current iterate.
    pub utility: f64,
    /// Constraint residual of the current iterate.
    pub penalty: f64,
    /// Dual variable before this iteration's update.
    pub lambda: f64,
    /// Learning rate actually applied in this iteration.
    pub eta: f64,
    /// Norm of the parameter step taken this iteration.
    pub theta_delta: f64,
}

/// Full record of an ascent run.
#[derive(Clone, Debug, Default)]
pub struct TrainTrace {
    /// One entry per iteration.
    pub steps: Vec<TraceStep>,
    /// Whether the step norm reached the stopping threshold.
    pub converged: bool,
    /// For constrained runs, whether the returned policy satisfies the
    /// constraint; `None` for unconstrained runs.
    pub feasible: Option<bool>,
}

impl TrainTrace {
    /// Write the trace as CSV with header
    /// `iter,utility,penalty,lambda,eta,theta_delta`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("iter,utility,penalty,lambda,eta,theta_delta\n");
        for s in &self.steps {
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.iter, s.utility, s.penalty, s.lambda, s.eta, s.theta_delta
            ));
        }
        std::fs::write(path, text).map_err(Error::Io)
    }
}

/// The trainable policy families, reduced to their parameter vector.
#[derive(Clone, Debug)]
enum Family {
    Separable(Vec<f64>),
    Softmax(Vec<f64>, f64),
    Threshold(Vec<f64>),
}

impl Family {
    fn from_policy(pi: &Policy) -> Result<Family> {
        match pi {
            Policy::SeparableLinear(p) => Ok(Family::Separable(p.theta().to_vec())),
            Policy::Softmax(p) => Ok(Family::Softmax(p.theta().to_vec(), p.beta())),
            Policy::LogisticThreshold(p) => Ok(Family::Threshold(p.theta().to_vec())),
            Policy::Tabular(_) | Policy::Deterministic(_) => Err(Error::Argument(
                "gradient ascent requires a parametric policy family".into(),
            )),
        }
    }

    fn theta(&self) -> &[f64] {
        match self {
            Family::Separable(t) | Family::Threshold(t) => t,
            Family::Softmax(t, _) => t,
        }
    }

    fn to_policy(&self) -> Result<Policy> {
        match self {
            Family::Separable(t) => Policy::separable_linear(t.clone()),
            Family::Softmax(t, beta) => Policy::softmax(t.clone(), *beta),
            Family::Threshold(t) => Policy::logistic_threshold(t.clone()),
        }
    }

    /// New parameters after one gradient step, respecting the separable
    /// family's interior clamp.
    fn stepped(&self, eta: f64, grad: &[f64]) -> Family {
        let step = |t: &[f64], clamp: bool| {
            t.iter()
                .zip(grad)
                .map(|(v, g)| {
                    let next = v + eta * g;
                    if clamp {
                        next.clamp(MARGINAL_CLAMP, 1.0 - MARGINAL_CLAMP)
                    } else {
                        next
                    }
                })
                .collect()
        };
        match self {
            Family::Separable(t) => Family::Separable(step(t, true)),
            Family::Softmax(t, beta) => Family::Softmax(step(t, false), *beta),
            Family::Threshold(t) => Family::Threshold(step(t, false)),
        }
    }

    /// Pull the separable parameters into the interior once, so the iterate
    /// invariant holds from the first step.
    fn clamped(mut self) -> Family {
        if let Family::Separable(t) = &mut self {
            for v in t.iter_mut() {
                *v = v.clamp(MARGINAL_CLAMP, 1.0 - MARGINAL_CLAMP);
            }
        }
        self
    }

    /// Chain per-candidate inclusion differences U(π+i) − U(π−i) through the
    /// family's marginal map to get the parameter gradient.
    fn param_gradient(&self, diffs: &[f64], pop: &Population) -> Vec<f64> {
        match self {
            Family::Separable(_) => diffs.to_vec(),
            Family::Softmax(t, beta) => t
                .iter()
                .zip(diffs)
                .map(|(v, d)| beta * sigmoid_prime(beta * v) * d)
                .collect(),
            Family::Threshold(t) => {
                let mut grad = vec![0.0; t.len()];
                for (i, d) in diffs.iter().enumerate() {
                    let x = pop.feature_row(i);
                    let z: f64 = t.iter().zip(x).map(|(w, v)| w * v).sum();
                    let s = sigmoid_prime(z);
                    for (slot, xv) in grad.iter_mut().zip(x) {
                        *slot += s * d * xv;
                    }
                }
                grad
            }
        }
    }
}

/// Exact per-candidate forced inclusion/exclusion utilities
/// (U(π+i), U(π−i)) under a policy, in one pass over its distribution.
fn expected_inclusion(
    oracle: &ExpectedUtilityOracle,
    pi: &Policy,
    pop: &Population,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = oracle.n();
    if let Some(support) = pi.small_support() {
        let mut with_i = vec![0.0; n];
        let mut without_i = vec![0.0; n];
        for (a, p) in support {
            let (wi, wo) = oracle.inclusion_values(&a)?;
            for k in 0..n {
                with_i[k] += p * wi[k];
                without_i[k] += p * wo[k];
            }
        }
        return Ok((with_i, without_i));
    }
    let probs = pi.subset_distribution(pop)?;
    let table = oracle.value_table()?;
    let mut with_i = vec![0.0; n];
    let mut without_i = vec![0.0; n];
    for (mask, p) in probs.iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        let mask = mask as u64;
        for k in 0..n {
            with_i[k] += p * table[(mask | (1 << k)) as usize];
            without_i[k] += p * table[(mask & !(1u64 << k)) as usize];
        }
    }
    Ok((with_i, without_i))
}

/// Monte Carlo estimate of the inclusion differences U(π+i) − U(π−i); every
/// candidate shares the same drawn subsets.
fn sampled_inclusion_diffs(
    oracle: &ExpectedUtilityOracle,
    pi: &Policy,
    pop: &Population,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::Argument("sampled gradients need at least one draw".into()));
    }
    let n = oracle.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0; n];
    for _ in 0..samples {
        let a = pi.sample(pop, &mut rng)?;
        let (wi, wo) = oracle.inclusion_values(&a)?;
        for k in 0..n {
            acc[k] += wi[k] - wo[k];
        }
    }
    for v in acc.iter_mut() {
        *v /= samples as f64;
    }
    Ok(acc)
}

fn inclusion_diffs(
    oracle: &ExpectedUtilityOracle,
    pi: &Policy,
    pop: &Population,
    mode: EvalMode,
) -> Result<Vec<f64>> {
    match mode {
        EvalMode::Exact => {
            let (wi, wo) = expected_inclusion(oracle, pi, pop)?;
            Ok(wi.iter().zip(&wo).map(|(a, b)| a - b).collect())
        }
        EvalMode::Sampled { n, seed } => sampled_inclusion_diffs(oracle, pi, pop, n, seed),
    }
}

/// Gradient of the policy utility with respect to the separable family's
/// selection probabilities: ∂U/∂θ_i = U(π+i) − U(π−i).
pub fn grad_separable_linear(
    oracle: &ExpectedUtilityOracle,
    theta: &[f64],
    pop: &Population,
    mode: EvalMode,
) -> Result<Vec<f64>> {
    let pi = Policy::separable_linear(theta.to_vec())?;
    inclusion_diffs(oracle, &pi, pop, mode)
}

/// Exact gradient of the policy utility with respect to the softmax scores:
/// ∂U/∂θ_i = β·σ′(β·θ_i)·(U(π+i) − U(π−i)).
pub fn grad_softmax(
    oracle: &ExpectedUtilityOracle,
    theta: &[f64],
    beta: f64,
    pop: &Population,
) -> Result<Vec<f64>> {
    let pi = Policy::softmax(theta.to_vec(), beta)?;
    let diffs = inclusion_diffs(oracle, &pi, pop, EvalMode::Exact)?;
    Ok(theta
        .iter()
        .zip(&diffs)
        .map(|(t, d)| beta * sigmoid_prime(beta * t) * d)
        .collect())
}

/// Gradient of the policy utility with respect to the logistic-threshold
/// weights. The exact form chains the inclusion differences through each
/// candidate's feature row; the sampled form is the likelihood-ratio
/// estimator mean_k U(a_k) · Σ_j x_j (a_j − σ(θᵀx_j)).
pub fn grad_threshold(
    oracle: &ExpectedUtilityOracle,
    theta: &[f64],
    pop: &Population,
    mode: EvalMode,
) -> Result<Vec<f64>> {
    let pi = Policy::logistic_threshold(theta.to_vec())?;
    match mode {
        EvalMode::Exact => {
            let diffs = inclusion_diffs(oracle, &pi, pop, EvalMode::Exact)?;
            Ok(Family::Threshold(theta.to_vec()).param_gradient(&diffs, pop))
        }
        EvalMode::Sampled { n: samples, seed } => {
            if samples == 0 {
                return Err(Error::Argument("sampled gradients need at least one draw".into()));
            }
            let marginals = pi.marginals(pop)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut grad = vec![0.0; theta.len()];
            for _ in 0..samples {
                let a = pi.sample(pop, &mut rng)?;
                let u = oracle.expected_set_utility(&a)?;
                for (j, m) in marginals.iter().enumerate() {
                    let score = if a.contains(j) { 1.0 - m } else { -m };
                    let x = pop.feature_row(j);
                    for (slot, xv) in grad.iter_mut().zip(x) {
                        *slot += u * score * xv;
                    }
                }
            }
            for v in grad.iter_mut() {
                *v /= samples as f64;
            }
            Ok(grad)
        }
    }
}

fn check_config(cfg: &OptimizerConfig) -> Result<()> {
    if !(cfg.eta0 >= 0.0) || !cfg.eta0.is_finite() {
        return Err(Error::Argument(format!(
            "learning rate must be finite and nonnegative, got {}",
            cfg.eta0
        )));
    }
    if !(cfg.delta >= 0.0) {
        return Err(Error::Argument(format!(
            "stopping threshold must be nonnegative, got {}",
            cfg.delta
        )));
    }
    if !(0.0..=1.0).contains(&cfg.eta_decay) {
        return Err(Error::Argument(format!(
            "learning-rate decay must lie in [0, 1], got {}",
            cfg.eta_decay
        )));
    }
    if !cfg.exact_gradient && cfg.mc_samples == 0 {
        return Err(Error::Argument("sampled runs need at least one sample per step".into()));
    }
    Ok(())
}

fn eval_policy(
    oracle: &ExpectedUtilityOracle,
    pi: &Policy,
    pop: &Population,
    cfg: &OptimizerConfig,
    stream: u64,
) -> Result<f64> {
    if cfg.exact_gradient {
        oracle.policy_utility(pi, pop, EvalMode::Exact)
    } else {
        oracle.policy_utility(
            pi,
            pop,
            EvalMode::Sampled { n: cfg.mc_samples, seed: derive_seed(cfg.seed, stream) },
        )
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Maximize expected utility over the initial policy's own family by
/// projected gradient ascent. In exact mode the step is backtracked until it
/// does not decrease utility, so the recorded utilities are nondecreasing.
/// Returns the final policy together with the per-iteration trace.
pub fn policy_gradient(
    oracle: &ExpectedUtilityOracle,
    pi0: &Policy,
    pop: &Population,
    cfg: &OptimizerConfig,
) -> Result<(Policy, TrainTrace)> {
    ascend(oracle, pi0, pop, None, cfg)
}

/// Constrained variant of [`policy_gradient`]: primal-dual ascent on the
/// Lagrangian U(θ) − λ·gap²(θ) with dual updates driven by the residual
/// gap² − ε². The learning rate stays fixed (the saddle objective is not
/// monotone), and the best feasible iterate encountered is returned; the
/// trace's `feasible` flag records whether one existed.
pub fn constrained_policy_gradient(
    oracle: &ExpectedUtilityOracle,
    pi0: &Policy,
    pop: &Population,
    constraint: &ParityConstraint,
    cfg: &OptimizerConfig,
) -> Result<(Policy, TrainTrace)> {
    ascend(oracle, pi0, pop, Some(constraint), cfg)
}

fn ascend(
    oracle: &ExpectedUtilityOracle,
    pi0: &Policy,
    pop: &Population,
    constraint: Option<&ParityConstraint>,
    cfg: &OptimizerConfig,
) -> Result<(Policy, TrainTrace)> {
    check_config(cfg)?;
    let fam0 = Family::from_policy(pi0)?;

    // A zero learning rate freezes the run: report the starting point and
    // hand the initial policy back untouched.
    if cfg.eta0 == 0.0 {
        let u = eval_policy(oracle, pi0, pop, cfg, 1_000_000)?;
        let (penalty, feasible) = match constraint {
            Some(c) => {
                let gap = parity_gap(pi0, pop, &c.groups)?;
                (gap * gap - c.epsilon * c.epsilon, Some(gap <= c.epsilon))
            }
            None => (0.0, None),
        };
        let trace = TrainTrace {
            steps: vec![TraceStep {
                iter: 0,
                utility: u,
                penalty,
                lambda: cfg.lambda0,
                eta: 0.0,
                theta_delta: 0.0,
            }],
            converged: true,
            feasible,
        };
        return Ok((pi0.clone(), trace));
    }

    let mut fam = fam0.clamped();
    let mut pi = fam.to_policy()?;
    let mut u = eval_policy(oracle, &pi, pop, cfg, 1_000_000)?;
    let mut eta = cfg.eta0;
    let mut lambda = cfg.lambda0;
    let mut steps: Vec<TraceStep> = Vec::new();
    let mut converged = false;

    // Best feasible iterate seen so far, for constrained runs.
    let mut best_feasible: Option<(f64, Family)> = None;
    let note_feasible = |fam: &Family, pi: &Policy, u: f64, best: &mut Option<(f64, Family)>| -> Result<()> {
        if let Some(c) = constraint {
            let gap = parity_gap(pi, pop, &c.groups)?;
            if gap <= c.epsilon && best.as_ref().map_or(true, |(bu, _)| u > *bu) {
                *best = Some((u, fam.clone()));
            }
        }
        Ok(())
    };
    note_feasible(&fam, &pi, u, &mut best_feasible)?;

    let mut best_u = u;
    let mut stall = 0usize;

    for iter in 0..cfg.max_iters {
        let grad_mode = if cfg.exact_gradient {
            EvalMode::Exact
        } else {
            EvalMode::Sampled { n: cfg.mc_samples, seed: derive_seed(cfg.seed, iter as u64) }
        };
        let diffs = inclusion_diffs(oracle, &pi, pop, grad_mode)?;
        let mut grad = fam.param_gradient(&diffs, pop);

        let mut penalty = 0.0;
        if let Some(c) = constraint {
            let gap = parity_gap(&pi, pop, &c.groups)?;
            penalty = gap * gap - c.epsilon * c.epsilon;
            let pgrad = parity_penalty_gradient(&pi, pop, &c.groups)?;
            for (g, p) in grad.iter_mut().zip(&pgrad) {
                *g -= lambda * p;
            }
        }

        if !u.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            let trace = TrainTrace {
                steps,
                converged: false,
                feasible: constraint.map(|_| false),
            };
            return Err(Error::Divergence { iter, trace: Box::new(trace) });
        }

        // Take the step. Unconstrained exact runs backtrack until the step
        // does not lose utility; everything else steps at the current rate.
        let mut eta_eff = eta;
        let mut cand = fam.stepped(eta_eff, &grad);
        let mut cand_pi = cand.to_policy()?;
        let mut cand_u = eval_policy(oracle, &cand_pi, pop, cfg, 2_000_000 + iter as u64)?;
        if cfg.exact_gradient && constraint.is_none() {
            let mut tries = 0;
            while cand_u < u && tries < 60 {
                eta_eff *= 0.5;
                cand = fam.stepped(eta_eff, &grad);
                cand_pi = cand.to_policy()?;
                cand_u = eval_policy(oracle, &cand_pi, pop, cfg, 2_000_000 + iter as u64)?;
                tries += 1;
            }
            if cand_u < u {
                // No improving step along this direction: stay put.
                eta_eff = 0.0;
                cand = fam.clone();
                cand_pi = pi.clone();
                cand_u = u;
            }
        }

        let theta_delta = l2(cand.theta(), fam.theta());
        steps.push(TraceStep { iter, utility: u, penalty, lambda, eta: eta_eff, theta_delta });

        if constraint.is_some() {
            lambda = match cfg.multiplier_mode {
                MultiplierMode::Conventional => (lambda + eta * penalty).max(0.0),
                MultiplierMode::NonpositiveLiteral => (lambda - eta * penalty).min(0.0),
            };
        }

        fam = cand;
        pi = cand_pi;
        u = cand_u;
        note_feasible(&fam, &pi, u, &mut best_feasible)?;

        if u > best_u + 1e-15 {
            best_u = u;
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.stall_window.max(1) {
                eta *= cfg.eta_decay;
                stall = 0;
            }
        }

        if theta_delta <= cfg.delta {
            converged = true;
            break;
        }
    }

    let (final_fam, feasible) = match constraint {
        None => (fam, None),
        Some(_) => match best_feasible {
            Some((_, bf)) => (bf, Some(true)),
            None => (fam, Some(false)),
        },
    };
    let policy = final_fam.to_policy()?;
    Ok((policy, TrainTrace { steps, converged, feasible }))
}

/// Greedy forward selection over expected set utilities. Each round draws a
/// fresh `subsample`-sized pool of unselected candidates (default: a fifth
/// of the population, at least one), adds the pool candidate with the
/// largest utility gain (ties to the lowest index), and stops once the best
/// gain is negative. With a constraint, gains are computed against the
/// constrained utility U(A)·1[A satisfies parity].
pub fn stochastic_greedy(
    oracle: &ExpectedUtilityOracle,
    pop: &Population,
    subsample: Option<usize>,
    seed: u64,
    constraint: Option<&ParityConstraint>,
) -> Result<Selection> {
    let n = oracle.n();
    if pop.len() != n {
        return Err(Error::Dimension(format!(
            "population of {} candidates for an oracle over {n}",
            pop.len()
        )));
    }
    if n == 0 {
        return Ok(Selection::empty(0));
    }
    let pool_size = match subsample {
        Some(0) => {
            return Err(Error::Argument("greedy subsample size must be positive".into()));
        }
        Some(s) => s.min(n),
        None => n.div_ceil(5).max(1),
    };
    let effective = |a: &Selection, u: f64| match constraint {
        Some(c) if !set_satisfies_parity(a, c) => 0.0,
        _ => u,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = Selection::empty(n);
    let mut current_eff = effective(&current, oracle.expected_set_utility(&current)?);
    loop {
        let mut remaining: Vec<usize> = (0..n).filter(|i| !current.contains(*i)).collect();
        if remaining.is_empty() {
            break;
        }
        // Partial Fisher-Yates draw of this round's pool.
        let k = pool_size.min(remaining.len());
        for slot in 0..k {
            let j = rng.gen_range(slot..remaining.len());
            remaining.swap(slot, j);
        }
        let mut pool: Vec<usize> = remaining[..k].to_vec();
        pool.sort_unstable();

        let mut best: Option<(usize, f64)> = None;
        for &i in &pool {
            let cand = current.with(i);
            let eff = effective(&cand, oracle.expected_set_utility(&cand)?);
            let gain = eff - current_eff;
            if best.map_or(true, |(_, bg)| gain > bg) {
                best = Some((i, gain));
            }
        }
        let (idx, gain) = best.expect("nonempty pool");
        if gain < 0.0 {
            break;
        }
        current.insert(idx);
        current_eff += gain;
    }
    Ok(current)
}

/// The uniform distribution over all subsets of an `n`-candidate population.
pub fn uniform_policy(n: usize) -> Policy {
    Policy::uniform(n)
}

/// Deterministic top-k selection by score, breaking ties toward lower
/// indices; `k` may not exceed the number of scores.
pub fn historical_topk(scores: &[f64], k: usize) -> Result<Selection> {
    if k > scores.len() {
        return Err(Error::Argument(format!(
            "cannot select {k} of {} candidates",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => a.cmp(&b),
        other => other,
    });
    Selection::from_indices(scores.len(), &order[..k])
}
