//! Dense utility/contribution/gradient maps over the two-candidate
//! separable policy square, for plotting and for checking the analytic
//! identities at specific grid points.

use std::path::Path;

use crate::contribution::emc_exact;
use crate::error::{Error, Result};
use crate::optimize::grad_separable_linear;
use crate::oracle::{EvalMode, ExpectedUtilityOracle};
use crate::outcome::{OutcomeMatrix, OutcomeModel};
use crate::policy::Policy;
use crate::population::Population;
use crate::utility::UtilityFunction;

/// A two-candidate instance and the grid resolution to sweep it with.
#[derive(Clone, Debug)]
pub struct LandscapeConfig {
    /// Outcome rows of the two candidates.
    pub outcomes: OutcomeMatrix,
    /// Per-selection cost of the diminishing-returns utility.
    pub cost: f64,
    /// Grid spacing along each marginal axis.
    pub step: f64,
}

impl LandscapeConfig {
    /// The reference instance: single outcomes 0.9 and 0.8, cost 0.3,
    /// swept at a spacing of 0.05.
    pub fn default_figure() -> Self {
        LandscapeConfig {
            outcomes: OutcomeMatrix::from_rows(vec![vec![0.9], vec![0.8]])
                .expect("static outcome rows"),
            cost: 0.3,
            step: 0.05,
        }
    }

    /// Expected-utility oracle of this instance.
    pub fn oracle(&self) -> Result<ExpectedUtilityOracle> {
        let pop = pair_population(self.outcomes.rows())?;
        ExpectedUtilityOracle::new(
            UtilityFunction::log_linear(self.cost),
            OutcomeModel::Table(self.outcomes.clone()),
            &pop,
        )
    }
}

/// One grid point of the sweep: the two marginals, the expected utility,
/// both expected marginal contributions, and the exact utility gradient.
#[derive(Clone, Copy, Debug)]
pub struct LandscapeRow {
    pub theta1: f64,
    pub theta2: f64,
    pub utility: f64,
    pub emc: [f64; 2],
    pub grad: [f64; 2],
}

fn pair_population(n: usize) -> Result<Population> {
    Population::new(
        (0..n).map(|i| format!("cand{}", i + 1)).collect(),
        (0..n).map(|i| if i % 2 == 0 { "m".into() } else { "f".into() }).collect(),
        vec![vec![0.0]; n],
    )
}

/// Sweep the separable policy square of a two-candidate instance. Both axes
/// run from 0 to 1 inclusive in steps of `cfg.step`, and every row carries
/// the exact utility, contributions, and gradient at that point.
pub fn landscape_grid(cfg: &LandscapeConfig) -> Result<Vec<LandscapeRow>> {
    if cfg.outcomes.rows() != 2 {
        return Err(Error::Argument(format!(
            "the landscape sweep is defined for exactly 2 candidates, got {}",
            cfg.outcomes.rows()
        )));
    }
    if !(cfg.step > 0.0 && cfg.step <= 1.0) {
        return Err(Error::Argument(format!(
            "grid step must lie in (0, 1], got {}",
            cfg.step
        )));
    }
    let oracle = cfg.oracle()?;
    let pop = pair_population(2)?;
    let per_axis = (1.0 / cfg.step).round() as usize + 1;
    let coord = |i: usize| (i as f64 * cfg.step).min(1.0);
    let mut rows = Vec::with_capacity(per_axis * per_axis);
    for i in 0..per_axis {
        for j in 0..per_axis {
            let theta = vec![coord(i), coord(j)];
            let pi = Policy::separable_linear(theta.clone())?;
            let utility = oracle.policy_utility(&pi, &pop, EvalMode::Exact)?;
            let emc = emc_exact(&oracle, &pi, &pop)?;
            let grad = grad_separable_linear(&oracle, &theta, &pop, EvalMode::Exact)?;
            rows.push(LandscapeRow {
                theta1: theta[0],
                theta2: theta[1],
                utility,
                emc: [emc.values[0], emc.values[1]],
                grad: [grad[0], grad[1]],
            });
        }
    }
    Ok(rows)
}

/// Write a sweep as CSV with header
/// `theta1,theta2,utility,emc_1,emc_2,grad_1,grad_2`.
pub fn write_csv(rows: &[LandscapeRow], path: &Path) -> Result<()> {
    let mut text = String::from("theta1,theta2,utility,emc_1,emc_2,grad_1,grad_2\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.theta1, r.theta2, r.utility, r.emc[0], r.emc[1], r.grad[0], r.grad[1]
        ));
    }
    std::fs::write(path, text).map_err(Error::Io)
}
