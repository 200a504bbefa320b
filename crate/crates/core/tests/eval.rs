//! Integration tests for the evaluation layer: set utilities, outcome
//! marginalization, and exact / sampled policy utilities, all cross-checked
//! against the brute-force oracles in `common`.

mod common;

use common::*;
use meritsel_core::{
    policy::TabularPolicy, utility::TabularUtility, Error, EvalMode, ExpectedUtilityOracle, Force,
    OutcomeMatrix, OutcomeModel, Policy, Population, Selection, UtilityFunction,
};

fn example2_oracle() -> ExpectedUtilityOracle {
    ExpectedUtilityOracle::tabular(TabularUtility::new(4, example2_table()).unwrap())
}

fn uniform16() -> Policy {
    Policy::Tabular(TabularPolicy::new(vec![1.0 / 16.0; 16]).unwrap())
}

#[test]
fn tabular_utility_reads_the_worked_example_table() {
    let table = TabularUtility::new(4, example2_table()).unwrap();
    let u = UtilityFunction::Tabular(table);
    let y = OutcomeMatrix::zeros(4, 0);
    let ab = Selection::from_indices(4, &[0, 1]).unwrap();
    assert_eq!(u.set_utility(&ab, &y).unwrap(), 2.0);
    let ac = Selection::from_indices(4, &[0, 2]).unwrap();
    assert_eq!(u.set_utility(&ac, &y).unwrap(), 1.0);
    let abc = Selection::from_indices(4, &[0, 1, 2]).unwrap();
    assert_eq!(u.set_utility(&abc, &y).unwrap(), 0.0);
}

#[test]
fn linear_utility_of_empty_set_is_zero() {
    let u = UtilityFunction::Linear { cost: 0.0 };
    let y = matrix(&[&[0.3, 0.5], &[0.9, 0.1]]);
    let empty = Selection::empty(2);
    assert_eq!(u.set_utility(&empty, &y).unwrap(), 0.0);
}

#[test]
fn linear_utility_sums_row_means_minus_cost() {
    let u = UtilityFunction::Linear { cost: 0.1 };
    let y = matrix(&[&[0.2, 0.4], &[0.6, 0.8]]);
    let both = Selection::full(2);
    // Row means 0.3 and 0.7, minus cost 0.1 per selected candidate.
    assert!((u.set_utility(&both, &y).unwrap() - (0.3 + 0.7 - 0.2)).abs() < 1e-12);
}

#[test]
fn log_linear_utility_at_unit_column_sum_is_zero() {
    let u = UtilityFunction::log_linear(0.0);
    let y = matrix(&[&[0.5], &[0.5]]);
    let both = Selection::full(2);
    assert!((u.set_utility(&both, &y).unwrap() - 0.0).abs() < 1e-12);
}

#[test]
fn log_linear_empty_set_hits_the_floor_not_an_error() {
    let u = UtilityFunction::log_linear(0.0);
    let y = matrix(&[&[0.5], &[0.5]]);
    let empty = Selection::empty(2);
    let got = u.set_utility(&empty, &y).unwrap();
    assert!((got - (1e-9f64).ln()).abs() < 1e-9);
}

#[test]
fn set_utility_rejects_mismatched_outcome_rows() {
    let u = UtilityFunction::Linear { cost: 0.0 };
    let y = matrix(&[&[0.5], &[0.5]]);
    let a = Selection::empty(3);
    assert!(matches!(u.set_utility(&a, &y), Err(Error::Dimension(_))));
}

#[test]
fn point_mass_outcome_model_reduces_to_plain_set_utility() {
    let y = matrix(&[&[0.3, 0.7], &[0.8, 0.2], &[0.5, 0.5]]);
    let pop = dummy_population(3);
    let u = UtilityFunction::Linear { cost: 0.05 };
    let direct = u.clone();
    let oracle =
        ExpectedUtilityOracle::new(u, OutcomeModel::Mixture(vec![(y.clone(), 1.0)]), &pop).unwrap();
    for mask in 0u64..8 {
        let a = Selection::from_mask(3, mask).unwrap();
        let expect = direct.set_utility(&a, &y).unwrap();
        assert!((oracle.expected_set_utility(&a).unwrap() - expect).abs() < 1e-15);
    }
}

#[test]
fn two_atom_mixture_is_the_convex_combination() {
    let y1 = matrix(&[&[0.0], &[1.0]]);
    let y2 = matrix(&[&[1.0], &[0.0]]);
    let pop = dummy_population(2);
    let u = UtilityFunction::Linear { cost: 0.0 };
    let oracle = ExpectedUtilityOracle::new(
        u.clone(),
        OutcomeModel::Mixture(vec![(y1.clone(), 0.25), (y2.clone(), 0.75)]),
        &pop,
    )
    .unwrap();
    let first = Selection::from_indices(2, &[0]).unwrap();
    let expect = 0.25 * u.set_utility(&first, &y1).unwrap() + 0.75 * u.set_utility(&first, &y2).unwrap();
    assert!((oracle.expected_set_utility(&first).unwrap() - expect).abs() < 1e-15);
    assert!((oracle.expected_set_utility(&first).unwrap() - 0.75).abs() < 1e-15);
}

#[test]
fn unnormalized_mixture_is_rejected() {
    let y = matrix(&[&[0.5]]);
    let pop = dummy_population(1);
    let u = UtilityFunction::Linear { cost: 0.0 };
    let err = ExpectedUtilityOracle::new(u, OutcomeModel::Mixture(vec![(y, 0.6)]), &pop);
    assert!(matches!(err, Err(Error::Model(_))));
}

#[test]
fn linear_outcome_model_predictions_match_hand_computation() {
    // One feature, two outcome columns: y_j = w_j * x + b_j, clipped to [0, 1].
    let pop = Population::new(
        vec!["a".into(), "b".into(), "c".into(), "d".into()],
        vec!["m".into(), "f".into(), "m".into(), "f".into()],
        vec![vec![0.1], vec![0.4], vec![0.9], vec![2.0]],
    )
    .unwrap();
    let model = OutcomeModel::Linear(meritsel_core::outcome::LinearOutcomeModel {
        coeffs: vec![vec![1.0], vec![-0.5]],
        intercepts: vec![0.0, 0.6],
        ridge: false,
    });
    let pred = model.predict(&pop).unwrap();
    for i in 0..4 {
        let x = pop.feature_row(i)[0];
        let want0 = (x).clamp(0.0, 1.0);
        let want1 = (0.6 - 0.5 * x).clamp(0.0, 1.0);
        assert!((pred.get(i, 0) - want0).abs() < 1e-12);
        assert!((pred.get(i, 1) - want1).abs() < 1e-12);
    }

    // Expected utility of a random subset equals an independent recomputation.
    let u = UtilityFunction::log_linear(0.07);
    let oracle = ExpectedUtilityOracle::new(u, model, &pop).unwrap();
    let a = Selection::from_indices(4, &[0, 3]).unwrap();
    let s0: f64 = pred.get(0, 0) + pred.get(3, 0);
    let s1: f64 = pred.get(0, 1) + pred.get(3, 1);
    let want = s0.max(1e-9).ln() + s1.max(1e-9).ln() - 0.07 * 2.0;
    assert!((oracle.expected_set_utility(&a).unwrap() - want).abs() < 1e-12);
}

#[test]
fn uniform_policy_utility_on_worked_example_is_4_16() {
    let oracle = example2_oracle();
    let pop = dummy_population(4);
    let got = oracle.policy_utility(&uniform16(), &pop, EvalMode::Exact).unwrap();
    let want = brute_policy_utility(&example2_table(), &vec![1.0 / 16.0; 16]);
    assert_eq!(want, 4.0 / 16.0);
    assert_eq!(got, 4.0 / 16.0);
}

#[test]
fn deterministic_policy_utility_is_the_set_utility() {
    let oracle = example2_oracle();
    let pop = dummy_population(4);
    let cd = Selection::from_indices(4, &[2, 3]).unwrap();
    let pi = Policy::deterministic(&cd);
    let got = oracle.policy_utility(&pi, &pop, EvalMode::Exact).unwrap();
    assert_eq!(got, 1.0);
}

#[test]
fn sampled_policy_utility_agrees_with_exact_within_three_stderr() {
    // Six candidates, seeded random utility table, independent Bernoulli(0.4).
    let mut table = vec![0.0; 64];
    let mut state = 0x9e3779b97f4a7c15u64;
    for v in table.iter_mut() {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *v = (state >> 11) as f64 / (1u64 << 53) as f64;
    }
    let oracle = ExpectedUtilityOracle::tabular(TabularUtility::new(6, table.clone()).unwrap());
    let pop = dummy_population(6);
    let pi = Policy::separable_linear(vec![0.4; 6]).unwrap();
    let exact = oracle.policy_utility(&pi, &pop, EvalMode::Exact).unwrap();
    let brute = brute_policy_utility(&table, &bernoulli_table(&[0.4; 6]));
    assert!((exact - brute).abs() < 1e-12);
    let est = oracle.policy_utility_estimate(&pi, &pop, 100_000, 17).unwrap();
    assert!(est.stderr > 0.0);
    assert!(
        (est.value - exact).abs() <= 3.0 * est.stderr,
        "mc {} exact {} se {}",
        est.value,
        exact,
        est.stderr
    );
}

#[test]
fn exact_policy_utility_on_large_population_is_a_capacity_error() {
    let pop = dummy_population(21);
    let y = OutcomeMatrix::zeros(21, 1);
    let u = UtilityFunction::Linear { cost: 0.0 };
    let oracle = ExpectedUtilityOracle::new(u, OutcomeModel::Table(y), &pop).unwrap();
    let pi = Policy::separable_linear(vec![0.5; 21]).unwrap();
    assert!(matches!(
        oracle.policy_utility(&pi, &pop, EvalMode::Exact),
        Err(Error::Capacity(_))
    ));
}

#[test]
fn forcing_a_into_the_uniform_policy_yields_6_16() {
    let oracle = example2_oracle();
    let pop = dummy_population(4);
    let force = Force::new(vec![0], vec![]).unwrap();
    let got = oracle
        .forced_policy_utility(&uniform16(), &pop, &force, EvalMode::Exact)
        .unwrap();
    let want = brute_forced_utility(&example2_table(), &vec![1.0 / 16.0; 16], 0b0001, 0);
    assert_eq!(want, 6.0 / 16.0);
    assert_eq!(got, 6.0 / 16.0);
}

#[test]
fn empty_force_matches_plain_policy_utility_exactly() {
    let oracle = example2_oracle();
    let pop = dummy_population(4);
    let force = Force::new(vec![], vec![]).unwrap();
    let plain = oracle.policy_utility(&uniform16(), &pop, EvalMode::Exact).unwrap();
    let forced = oracle
        .forced_policy_utility(&uniform16(), &pop, &force, EvalMode::Exact)
        .unwrap();
    assert_eq!(plain, forced);
}

#[test]
fn forcing_a_swap_on_a_point_mass_moves_the_whole_mass() {
    // δ_{C,D} with A forced in and D forced out lands on {A,C}.
    let oracle = example2_oracle();
    let pop = dummy_population(4);
    let cd = Selection::from_indices(4, &[2, 3]).unwrap();
    let pi = Policy::deterministic(&cd);
    let force = Force::new(vec![0], vec![3]).unwrap();
    let got = oracle
        .forced_policy_utility(&pi, &pop, &force, EvalMode::Exact)
        .unwrap();
    assert_eq!(got, 1.0);
}

#[test]
fn overlapping_force_sets_are_rejected() {
    assert!(matches!(Force::new(vec![1], vec![1]), Err(Error::Argument(_))));
}

#[test]
fn forcing_twice_is_idempotent() {
    let force = Force::new(vec![0, 2], vec![1]).unwrap();
    let a = Selection::from_indices(4, &[1, 3]).unwrap();
    let once = a.forced(&force);
    let twice = once.forced(&force);
    assert_eq!(once, twice);
    // And at the policy-utility level.
    let oracle = example2_oracle();
    let pop = dummy_population(4);
    let u1 = oracle
        .forced_policy_utility(&uniform16(), &pop, &force, EvalMode::Exact)
        .unwrap();
    // Applying the same force to an already-forced table is a no-op, checked
    // against the brute-force route.
    let mut probs = vec![0.0; 16];
    for (mask, p) in vec![1.0 / 16.0; 16].iter().enumerate() {
        let f = (mask as u32 | 0b0101) & !0b0010;
        probs[f as usize] += p;
    }
    let u2 = brute_forced_utility(&example2_table(), &probs, 0b0101, 0b0010);
    assert!((u1 - u2).abs() < 1e-15);
}

#[test]
fn sampled_forced_utility_matches_exact_within_four_stderr() {
    let oracle = example2_oracle();
    let pop = dummy_population(4);
    let pi = Policy::separable_linear(vec![0.3, 0.6, 0.2, 0.8]).unwrap();
    let force = Force::new(vec![1], vec![2]).unwrap();
    let exact = oracle
        .forced_policy_utility(&pi, &pop, &force, EvalMode::Exact)
        .unwrap();
    let brute = brute_forced_utility(
        &example2_table(),
        &bernoulli_table(&[0.3, 0.6, 0.2, 0.8]),
        0b0010,
        0b0100,
    );
    assert!((exact - brute).abs() < 1e-12);
    let sampled = oracle
        .forced_policy_utility(&pi, &pop, &force, EvalMode::Sampled { n: 40_000, seed: 5 })
        .unwrap();
    assert!((sampled - exact).abs() < 0.02, "sampled {sampled} exact {exact}");
}

#[test]
fn value_table_lists_all_subset_utilities() {
    let oracle = example2_oracle();
    let table = oracle.value_table().unwrap();
    assert_eq!(table, example2_table());
}

#[test]
fn marginal_gains_match_direct_differences() {
    let oracle = example2_oracle();
    let b = Selection::from_indices(4, &[1]).unwrap();
    let gains = oracle.marginal_gains(&b).unwrap();
    // U({B}+A) - U({B}) = 2; adding B is a no-op; C, D add nothing to {B}.
    assert_eq!(gains, vec![2.0, 0.0, 0.0, 0.0]);
}

#[test]
fn swap_values_match_forced_set_utilities() {
    let oracle = example2_oracle();
    let table = example2_table();
    let a = Selection::from_indices(4, &[1, 2]).unwrap(); // {B,C}
    let swaps = oracle.swap_values(&a).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            if i == j {
                continue;
            }
            let forced = ((0b0110u32 | (1 << i)) & !(1 << j)) as usize;
            assert_eq!(swaps[i * 4 + j], table[forced], "pair ({i},{j})");
        }
    }
}
