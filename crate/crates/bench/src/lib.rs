//! Shared fixture builders for the criterion benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use meritsel_core::simdata::{generate_population, generate_true_outcomes, GeneratorConfig};
use meritsel_core::utility::TabularUtility;
use meritsel_core::{
    ExpectedUtilityOracle, OutcomeModel, Policy, Population, UtilityFunction,
};

/// Seeded subset-utility table with values in [-1, 1].
pub fn random_table(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..1usize << n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Oracle over a seeded random subset-utility table.
pub fn tabular_oracle(n: usize, seed: u64) -> ExpectedUtilityOracle {
    ExpectedUtilityOracle::tabular(
        TabularUtility::new(n, random_table(n, seed)).expect("table shape"),
    )
}

/// Seeded interior separable policy for an `n`-candidate population.
pub fn interior_policy(n: usize, seed: u64) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = (0..n).map(|_| rng.gen_range(0.2..0.8)).collect();
    Policy::separable_linear(theta).expect("interior marginals")
}

/// Synthetic cohort with its true-outcome diminishing-returns oracle.
pub fn cohort(n: usize, seed: u64) -> (Population, ExpectedUtilityOracle) {
    let cfg = GeneratorConfig { n, ..GeneratorConfig::default() };
    let pop = generate_population(&cfg, seed).expect("cohort generation");
    let outcomes = generate_true_outcomes(&cfg, &pop, seed).expect("outcome generation");
    let oracle = ExpectedUtilityOracle::new(
        UtilityFunction::log_linear(0.05),
        OutcomeModel::Table(outcomes),
        &pop,
    )
    .expect("oracle construction");
    (pop, oracle)
}
