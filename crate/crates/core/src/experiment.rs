//! End-to-end synthetic-cohort experiment: generate applicants and hidden
//! outcomes, replay a legacy admission round, fit an outcome model on the
//! admitted subset only, train several selection policies against the
//! fitted model, and audit every policy on both the predicted and the true
//! outcome basis.

use crate::error::{Error, Result};
use crate::fairness::{GroupPair, ParityConstraint};
use crate::meritocracy::{audit, audit_sampled, AuditReport};
use crate::optimize::{
    constrained_policy_gradient, policy_gradient, stochastic_greedy, OptimizerConfig,
};
use crate::oracle::ExpectedUtilityOracle;
use crate::outcome::{LinearOutcomeModel, OutcomeModel};
use crate::policy::Policy;
use crate::population::Population;
use crate::selection::Selection;
use crate::simdata::{
    fit_outcome_model, generate_population, generate_true_outcomes, historical_admission,
    GeneratorConfig, FEATURE_COUNT,
};
use crate::util::{derive_seed, mean, sample_std};
use crate::utility::UtilityFunction;

/// Audit threshold under which deviations are treated as zero.
const AUDIT_TOL: f64 = 1e-9;

/// Gaussian score noise of the replayed legacy admissions.
const HISTORY_NOISE_SD: f64 = 0.1;

/// The trained threshold policy shares the separable policy's learning-rate
/// budget scaled down by this factor: its gradient aggregates over the whole
/// cohort instead of acting per candidate.
const THRESHOLD_ETA_SCALE: f64 = 1.0 / 50.0;

/// The five selection algorithms compared by the experiment, in reporting
/// order.
const ALGORITHMS: [&str; 5] =
    ["separable_linear", "threshold", "greedy", "uniform", "historical"];

/// Experiment settings. `Default` gives the reference setup: 200 applicants,
/// 5 repeats, selection cost 0.05, parity tolerance 0.1, unconstrained.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    /// Cohort size per repeat.
    pub n_applicants: usize,
    /// Number of independently seeded repeats.
    pub repeats: usize,
    /// Per-selection cost of the diminishing-returns utility.
    pub cost: f64,
    /// Parity tolerance of the constrained arm.
    pub epsilon: f64,
    /// Whether training must respect the parity constraint.
    pub constrained: bool,
    /// Monte Carlo draws per sampled audit.
    pub audit_samples: usize,
    /// Fraction of the cohort admitted by the legacy round that the outcome
    /// model is fitted on.
    pub admit_fraction: f64,
    /// Cohort generator settings; the cohort size is overridden by
    /// `n_applicants`.
    pub generator: GeneratorConfig,
    /// Base optimizer settings for the trained policies; seeds are derived
    /// per repeat and algorithm.
    pub optimizer: OptimizerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_applicants: 200,
            repeats: 5,
            cost: 0.05,
            epsilon: 0.1,
            constrained: false,
            audit_samples: 384,
            admit_fraction: 0.45,
            generator: GeneratorConfig::default(),
            optimizer: OptimizerConfig {
                eta0: 25.0,
                max_iters: 400,
                mc_samples: 64,
                exact_gradient: false,
                ..OptimizerConfig::default()
            },
        }
    }
}

/// One audited (repeat, algorithm, outcome basis) cell. Failed cells carry
/// the error text and NaN statistics, and are excluded from the summary.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub repeat: usize,
    pub algorithm: String,
    pub constrained: bool,
    pub outcome_basis: String,
    pub utility: f64,
    pub dev_swap: f64,
    pub dev_local: f64,
    pub error: Option<String>,
}

/// Aggregated statistics of one algorithm on one outcome basis.
#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub algorithm: String,
    pub constrained: bool,
    pub outcome_basis: String,
    pub utility_mean: f64,
    pub utility_std: f64,
    pub dev_swap_mean: f64,
    pub dev_swap_std: f64,
    pub dev_local_mean: f64,
    pub dev_local_std: f64,
}

/// Everything a finished experiment produced.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    /// One row per algorithm and outcome basis, in reporting order.
    pub summary: Vec<SummaryRow>,
    /// Every audited cell of every repeat.
    pub runs: Vec<RunRecord>,
}

impl ExperimentResult {
    /// The summary as CSV with header
    /// `algorithm,constrained,outcome_basis,utility_mean,utility_std,dev_swap_mean,dev_swap_std,dev_local_mean,dev_local_std`.
    pub fn summary_csv(&self) -> String {
        let mut text = String::from(
            "algorithm,constrained,outcome_basis,utility_mean,utility_std,dev_swap_mean,dev_swap_std,dev_local_mean,dev_local_std\n",
        );
        for r in &self.summary {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.algorithm,
                r.constrained,
                r.outcome_basis,
                r.utility_mean,
                r.utility_std,
                r.dev_swap_mean,
                r.dev_swap_std,
                r.dev_local_mean,
                r.dev_local_std
            ));
        }
        text
    }
}

/// Errors fan out into one record per outcome basis; keep the message, the
/// variant itself is not needed downstream.
fn clone_err(e: &Error) -> Error {
    Error::Argument(e.to_string())
}

/// Top-k by score with per-group quotas proportional to group size, so the
/// selection rates of the two groups match as closely as the counts allow.
fn balanced_topk(scores: &[f64], groups: &GroupPair, k: usize) -> Result<Selection> {
    let n = scores.len();
    let n_first = groups.first_indices().len();
    let n_second = groups.second_indices().len();
    let mut k_first =
        ((k as f64 * n_first as f64 / n as f64).round() as usize).min(n_first).min(k);
    let mut k_second = k - k_first;
    if k_second > n_second {
        k_first = (k_first + (k_second - n_second)).min(n_first);
        k_second = k - k_first;
    }
    let top_within = |idx: &[usize], take: usize| -> Vec<usize> {
        let mut order = idx.to_vec();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order.truncate(take);
        order
    };
    let mut chosen = top_within(groups.first_indices(), k_first);
    chosen.extend(top_within(groups.second_indices(), k_second));
    Selection::from_indices(n, &chosen)
}

struct RepeatInstance {
    pop: Population,
    fitted: LinearOutcomeModel,
    oracle_pred: ExpectedUtilityOracle,
    oracle_true: ExpectedUtilityOracle,
}

fn build_instance(cfg: &ExperimentConfig, rseed: u64) -> Result<RepeatInstance> {
    let gen_cfg = GeneratorConfig { n: cfg.n_applicants, ..cfg.generator.clone() };
    let pop = generate_population(&gen_cfg, derive_seed(rseed, 10))?;
    let y_true = generate_true_outcomes(&gen_cfg, &pop, derive_seed(rseed, 11))?;

    let k_fit = ((cfg.admit_fraction * pop.len() as f64).ceil() as usize).min(pop.len());
    let (admitted, _) =
        historical_admission(&pop, k_fit, derive_seed(rseed, 12), HISTORY_NOISE_SD)?;
    let rows: Vec<usize> = admitted.indices().collect();
    let fitted = fit_outcome_model(&pop, &y_true, Some(&rows))?;

    let utility = UtilityFunction::log_linear(cfg.cost);
    let oracle_pred =
        ExpectedUtilityOracle::new(utility.clone(), OutcomeModel::Linear(fitted.clone()), &pop)?;
    let oracle_true =
        ExpectedUtilityOracle::new(utility, OutcomeModel::Table(y_true), &pop)?;
    Ok(RepeatInstance { pop, fitted, oracle_pred, oracle_true })
}

/// Warm-start weights for the threshold policy: the fitted model's summed
/// coefficient vector, shifted along the all-ones direction so the sigmoid
/// crosses one half at the legacy admission rate, and scaled so the cohort's
/// quality spread covers the sigmoid's active range.
fn threshold_warm_start(inst: &RepeatInstance, admit_fraction: f64) -> Vec<f64> {
    let n = inst.pop.len();
    let mut wsum = vec![0.0; FEATURE_COUNT];
    for row in &inst.fitted.coeffs {
        for (d, w) in row.iter().enumerate() {
            wsum[d] += w;
        }
    }
    let q: Vec<f64> = (0..n)
        .map(|i| wsum.iter().zip(inst.pop.feature_row(i)).map(|(w, x)| w * x).sum())
        .collect();
    let mut sorted = q.clone();
    sorted.sort_by(f64::total_cmp);
    let cut = (((1.0 - admit_fraction) * n as f64) as usize).min(n.saturating_sub(1));
    let tau = sorted.get(cut).copied().unwrap_or(0.0);
    let xbar_sum: f64 = (0..n)
        .map(|i| inst.pop.feature_row(i).iter().sum::<f64>())
        .sum::<f64>()
        / (n.max(1) as f64);
    let sigma = sample_std(&q).max(1e-9);
    let alpha = 4.0 / sigma;
    wsum.iter().map(|w| alpha * (w - tau / xbar_sum.max(1e-9))).collect()
}

/// Train all five policies against the predicted-outcome oracle. Returns
/// `(algorithm, policy-or-error)` pairs in reporting order.
fn trained_policies(
    cfg: &ExperimentConfig,
    inst: &RepeatInstance,
    rseed: u64,
) -> Vec<(String, Result<Policy>)> {
    let n = inst.pop.len();
    let constraint = if cfg.constrained {
        match GroupPair::from_population(&inst.pop)
            .and_then(|groups| ParityConstraint::new(cfg.epsilon, groups))
        {
            Ok(c) => Some(c),
            Err(e) => {
                return ALGORITHMS
                    .iter()
                    .map(|a| (a.to_string(), Err(clone_err(&e))))
                    .collect();
            }
        }
    } else {
        None
    };

    let ascend = |pi0: Policy, eta_scale: f64, stream: u64| -> Result<Policy> {
        let opt_cfg = OptimizerConfig {
            eta0: cfg.optimizer.eta0 * eta_scale,
            seed: derive_seed(rseed, stream),
            ..cfg.optimizer.clone()
        };
        let (pi, _) = match &constraint {
            Some(c) => constrained_policy_gradient(&inst.oracle_pred, &pi0, &inst.pop, c, &opt_cfg)?,
            None => policy_gradient(&inst.oracle_pred, &pi0, &inst.pop, &opt_cfg)?,
        };
        Ok(pi)
    };

    let separable = ascend(Policy::uniform(n), 1.0, 20);
    let threshold = Policy::logistic_threshold(threshold_warm_start(inst, cfg.admit_fraction))
        .and_then(|pi0| ascend(pi0, THRESHOLD_ETA_SCALE, 21));

    let greedy_set = stochastic_greedy(
        &inst.oracle_pred,
        &inst.pop,
        None,
        derive_seed(rseed, 22),
        constraint.as_ref(),
    );
    let greedy = greedy_set.as_ref().map(Policy::deterministic).map_err(clone_err);

    // The legacy baseline admits as many candidates as greedy selected in
    // the current mode; its constrained variant balances the admission
    // rates of the two groups at that size.
    let historical = match &greedy_set {
        Err(e) => Err(clone_err(e)),
        Ok(set) => {
            let k = set.count();
            historical_admission(&inst.pop, k, derive_seed(rseed, 23), HISTORY_NOISE_SD).and_then(
                |(sel, scores)| match &constraint {
                    None => Ok(Policy::deterministic(&sel)),
                    Some(c) => balanced_topk(&scores, &c.groups, k)
                        .map(|balanced| Policy::deterministic(&balanced)),
                },
            )
        }
    };

    vec![
        ("separable_linear".to_string(), separable),
        ("threshold".to_string(), threshold),
        ("greedy".to_string(), greedy),
        ("uniform".to_string(), Ok(Policy::uniform(n))),
        ("historical".to_string(), historical),
    ]
}

fn evaluate(
    oracle: &ExpectedUtilityOracle,
    pi: &Policy,
    pop: &Population,
    id: &str,
    samples: usize,
    seed: u64,
) -> Result<AuditReport> {
    let exact = matches!(pi, Policy::Deterministic(_)) || pop.len() <= 16;
    if exact {
        audit(oracle, pi, pop, id, AUDIT_TOL)
    } else {
        audit_sampled(oracle, pi, pop, id, AUDIT_TOL, samples, seed)
    }
}

/// Run the full experiment: `repeats` independently seeded cohorts, each
/// generating applicants and outcomes, fitting the outcome model on the
/// historically admitted subset, training every algorithm against the fit,
/// and auditing the results on the predicted and the true outcome basis.
/// Cohort generation and evaluation seeds do not depend on the constrained
/// flag, so algorithms that ignore the constraint reproduce bit-identical
/// rows across the two modes.
pub fn run_experiment(cfg: &ExperimentConfig, master_seed: u64) -> Result<ExperimentResult> {
    let mut runs: Vec<RunRecord> = Vec::new();
    for repeat in 0..cfg.repeats {
        let rseed = derive_seed(master_seed, repeat as u64);
        let inst = build_instance(cfg, rseed)?;
        let policies = trained_policies(cfg, &inst, rseed);
        for (alg_idx, (algorithm, trained)) in policies.into_iter().enumerate() {
            for (basis_idx, (basis, oracle)) in
                [("predicted", &inst.oracle_pred), ("true", &inst.oracle_true)]
                    .into_iter()
                    .enumerate()
            {
                let record = match &trained {
                    Err(e) => RunRecord {
                        repeat,
                        algorithm: algorithm.clone(),
                        constrained: cfg.constrained,
                        outcome_basis: basis.to_string(),
                        utility: f64::NAN,
                        dev_swap: f64::NAN,
                        dev_local: f64::NAN,
                        error: Some(e.to_string()),
                    },
                    Ok(pi) => {
                        let seed =
                            derive_seed(rseed, 40 + 4 * alg_idx as u64 + basis_idx as u64);
                        match evaluate(oracle, pi, &inst.pop, &algorithm, cfg.audit_samples, seed)
                        {
                            Ok(report) => RunRecord {
                                repeat,
                                algorithm: algorithm.clone(),
                                constrained: cfg.constrained,
                                outcome_basis: basis.to_string(),
                                utility: report.utility,
                                dev_swap: report.dev_swap,
                                dev_local: report.dev_local,
                                error: None,
                            },
                            Err(e) => RunRecord {
                                repeat,
                                algorithm: algorithm.clone(),
                                constrained: cfg.constrained,
                                outcome_basis: basis.to_string(),
                                utility: f64::NAN,
                                dev_swap: f64::NAN,
                                dev_local: f64::NAN,
                                error: Some(e.to_string()),
                            },
                        }
                    }
                };
                runs.push(record);
            }
        }
    }

    let mut summary = Vec::new();
    for algorithm in ALGORITHMS {
        for basis in ["predicted", "true"] {
            let cells: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.algorithm == algorithm && r.outcome_basis == basis && r.error.is_none())
                .collect();
            let stat = |f: fn(&RunRecord) -> f64| -> (f64, f64) {
                let values: Vec<f64> = cells.iter().map(|r| f(r)).collect();
                (mean(&values), sample_std(&values))
            };
            let (utility_mean, utility_std) = stat(|r| r.utility);
            let (dev_swap_mean, dev_swap_std) = stat(|r| r.dev_swap);
            let (dev_local_mean, dev_local_std) = stat(|r| r.dev_local);
            summary.push(SummaryRow {
                algorithm: algorithm.to_string(),
                constrained: cfg.constrained,
                outcome_basis: basis.to_string(),
                utility_mean,
                utility_std,
                dev_swap_mean,
                dev_swap_std,
                dev_local_mean,
                dev_local_std,
            });
        }
    }
    Ok(ExperimentResult { summary, runs })
}
