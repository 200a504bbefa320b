//! Integration tests for the policy families: subset probabilities,
//! marginals, sampling, group rates, and the per-size weighting used for the
//! Shapley connection.

mod common;

use common::*;
use meritsel_core::{
    policy::{ShapleyWeighting, TabularPolicy},
    Error, Policy, Population, Selection,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn separable_linear_prob_is_the_bernoulli_product() {
    let pop = dummy_population(2);
    let pi = Policy::separable_linear(vec![1.0, 0.0]).unwrap();
    let first = Selection::from_indices(2, &[0]).unwrap();
    assert_eq!(pi.prob_of_set(&first, &pop).unwrap(), 1.0);
    let both = Selection::full(2);
    assert_eq!(pi.prob_of_set(&both, &pop).unwrap(), 0.0);

    let pi = Policy::separable_linear(vec![0.3, 0.6]).unwrap();
    for mask in 0u64..4 {
        let a = Selection::from_mask(2, mask).unwrap();
        let want = bernoulli_prob(&[0.3, 0.6], mask as u32);
        assert!((pi.prob_of_set(&a, &pop).unwrap() - want).abs() < 1e-15);
    }
}

#[test]
fn softmax_with_zero_inverse_temperature_is_uniform() {
    let pop = dummy_population(3);
    let pi = Policy::softmax(vec![1.0, -2.0, 0.5], 0.0).unwrap();
    for mask in 0u64..8 {
        let a = Selection::from_mask(3, mask).unwrap();
        assert!((pi.prob_of_set(&a, &pop).unwrap() - 1.0 / 8.0).abs() < 1e-15);
    }
}

#[test]
fn softmax_prob_matches_explicit_normalizer() {
    // Two candidates, beta = 1, theta = (1, 0); the normalizer is the plain
    // sum of exp(theta . a) over the four subsets.
    let pop = dummy_population(2);
    let pi = Policy::softmax(vec![1.0, 0.0], 1.0).unwrap();
    let z: f64 = (0u32..4)
        .map(|mask| {
            let mut dot = 0.0;
            if mask & 1 != 0 {
                dot += 1.0;
            }
            (dot as f64).exp()
        })
        .sum();
    let first = Selection::from_indices(2, &[0]).unwrap();
    let want = 1.0f64.exp() / z;
    assert!((pi.prob_of_set(&first, &pop).unwrap() - want).abs() < 1e-12);
}

#[test]
fn each_family_normalizes_over_all_subsets() {
    let pop = Population::new(
        (0..5).map(|i| i.to_string()).collect(),
        vec!["m".into(), "f".into(), "m".into(), "f".into(), "m".into()],
        vec![
            vec![0.2, 0.9],
            vec![0.4, 0.1],
            vec![0.8, 0.5],
            vec![0.1, 0.3],
            vec![0.7, 0.7],
        ],
    )
    .unwrap();
    let policies = vec![
        Policy::separable_linear(vec![0.2, 0.9, 0.5, 0.01, 0.99]).unwrap(),
        Policy::softmax(vec![0.3, -1.0, 2.0, 0.0, -0.4], 1.7).unwrap(),
        Policy::logistic_threshold(vec![1.2, -0.8]).unwrap(),
        Policy::Tabular(TabularPolicy::new(vec![1.0 / 32.0; 32]).unwrap()),
    ];
    for pi in policies {
        let total: f64 = (0u64..32)
            .map(|mask| pi.prob_of_set(&Selection::from_mask(5, mask).unwrap(), &pop).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-9, "{} sums to {total}", pi.family_name());
    }
}

#[test]
fn marginal_prob_matches_summed_subset_probabilities() {
    let pop = dummy_population(4);
    let policies = vec![
        Policy::separable_linear(vec![0.3, 0.5, 0.7, 0.2]).unwrap(),
        Policy::softmax(vec![0.5, -0.5, 1.5, 0.0], 0.8).unwrap(),
        Policy::Tabular(TabularPolicy::new(never_d_without_a_probs()).unwrap()),
    ];
    for pi in policies {
        for i in 0..4 {
            let summed: f64 = (0u64..16)
                .filter(|mask| mask & (1 << i) != 0)
                .map(|mask| pi.prob_of_set(&Selection::from_mask(4, mask).unwrap(), &pop).unwrap())
                .sum();
            let got = pi.marginal_prob(i, &pop).unwrap();
            assert!((got - summed).abs() < 1e-10, "{} cand {i}", pi.family_name());
        }
    }
}

#[test]
fn separable_marginal_is_theta_itself() {
    let pop = dummy_population(3);
    let pi = Policy::separable_linear(vec![0.3, 0.9, 0.0]).unwrap();
    assert_eq!(pi.marginal_prob(0, &pop).unwrap(), 0.3);
}

#[test]
fn uniform_tabular_marginals_are_one_half() {
    let pop = dummy_population(4);
    let pi = Policy::Tabular(TabularPolicy::new(vec![1.0 / 16.0; 16]).unwrap());
    for i in 0..4 {
        assert!((pi.marginal_prob(i, &pop).unwrap() - 0.5).abs() < 1e-12);
    }
}

#[test]
fn never_d_without_a_marginal_of_d_is_4_12() {
    let pop = dummy_population(4);
    let pi = Policy::Tabular(TabularPolicy::new(never_d_without_a_probs()).unwrap());
    let got = pi.marginal_prob(3, &pop).unwrap();
    assert!((got - 4.0 / 12.0).abs() < 1e-12);
}

#[test]
fn logistic_threshold_marginal_is_sigmoid_of_score() {
    let pop = Population::new(
        vec!["a".into(), "b".into()],
        vec!["m".into(), "f".into()],
        vec![vec![2.0, -1.0], vec![0.0, 0.0]],
    )
    .unwrap();
    let pi = Policy::logistic_threshold(vec![0.5, 1.0]).unwrap();
    let z0: f64 = 0.5 * 2.0 + 1.0 * (-1.0);
    let want0 = 1.0 / (1.0 + (-z0).exp());
    assert!((pi.marginal_prob(0, &pop).unwrap() - want0).abs() < 1e-12);
    assert!((pi.marginal_prob(1, &pop).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn logistic_threshold_is_stable_for_extreme_scores() {
    let pop = Population::new(
        vec!["a".into(), "b".into()],
        vec!["m".into(), "f".into()],
        vec![vec![1000.0], vec![-1000.0]],
    )
    .unwrap();
    let pi = Policy::logistic_threshold(vec![1.0]).unwrap();
    let hi = pi.marginal_prob(0, &pop).unwrap();
    let lo = pi.marginal_prob(1, &pop).unwrap();
    assert!(hi.is_finite() && lo.is_finite());
    assert!(hi > 1.0 - 1e-12 && hi <= 1.0);
    assert!(lo < 1e-12 && lo >= 0.0);
}

#[test]
fn degenerate_thetas_sample_deterministically() {
    let pop = dummy_population(3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let all = Policy::separable_linear(vec![1.0; 3]).unwrap();
    assert_eq!(all.sample(&pop, &mut rng).unwrap(), Selection::full(3));
    let none = Policy::separable_linear(vec![0.0; 3]).unwrap();
    assert_eq!(none.sample(&pop, &mut rng).unwrap(), Selection::empty(3));
}

#[test]
fn sampling_is_reproducible_for_a_fixed_seed() {
    let pop = dummy_population(6);
    let pi = Policy::separable_linear(vec![0.5; 6]).unwrap();
    let mut r1 = ChaCha8Rng::seed_from_u64(42);
    let mut r2 = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..20 {
        assert_eq!(pi.sample(&pop, &mut r1).unwrap(), pi.sample(&pop, &mut r2).unwrap());
    }
}

#[test]
fn sample_frequencies_match_subset_probabilities() {
    // Four candidates, tabular policy; empirical subset frequencies over 1e5
    // draws stay within four binomial standard errors of the probabilities.
    let pop = dummy_population(4);
    let probs = never_d_without_a_probs();
    let pi = Policy::Tabular(TabularPolicy::new(probs.clone()).unwrap());
    let n = 100_000usize;
    let mut counts = vec![0usize; 16];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..n {
        let a = pi.sample(&pop, &mut rng).unwrap();
        counts[a.mask().unwrap() as usize] += 1;
    }
    for (mask, p) in probs.iter().enumerate() {
        let freq = counts[mask] as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (freq - p).abs() <= 4.0 * se + 1e-12,
            "mask {mask}: freq {freq} prob {p}"
        );
    }
}

#[test]
fn group_selection_rate_is_the_mean_group_marginal() {
    let pop = dummy_population(4);
    let uniform = Policy::Tabular(TabularPolicy::new(vec![1.0 / 16.0; 16]).unwrap());
    assert!((uniform.group_selection_rate(&[0, 2], &pop).unwrap() - 0.5).abs() < 1e-12);

    let pi = Policy::separable_linear(vec![1.0, 0.0, 0.6, 0.2]).unwrap();
    assert_eq!(pi.group_selection_rate(&[0], &pop).unwrap(), 1.0);
    assert_eq!(pi.group_selection_rate(&[1], &pop).unwrap(), 0.0);
    let got = pi.group_selection_rate(&[2, 3], &pop).unwrap();
    assert!((got - 0.4).abs() < 1e-12);
}

#[test]
fn empty_group_rate_is_an_argument_error() {
    let pop = dummy_population(2);
    let pi = Policy::separable_linear(vec![0.5, 0.5]).unwrap();
    assert!(matches!(pi.group_selection_rate(&[], &pop), Err(Error::Argument(_))));
}

#[test]
fn shapley_weighting_conditional_mass_is_one_for_every_candidate() {
    for n in 2..=10usize {
        let w = ShapleyWeighting::new(n);
        for i in 0..n {
            let mut mass = 0.0;
            for mask in 0u64..(1 << n) {
                if mask & (1 << i) != 0 {
                    continue;
                }
                mass += w.weight(&Selection::from_mask(n, mask).unwrap());
            }
            assert!((mass - 1.0).abs() < 1e-10, "n={n} i={i} mass={mass}");
        }
    }
}

#[test]
fn shapley_weighting_total_mass_is_the_harmonic_number_not_one() {
    // The per-size weighting is deliberately unnormalized: its total mass is
    // H_N, so it is exposed as a weighting rather than a policy.
    let n = 5usize;
    let w = ShapleyWeighting::new(n);
    let total: f64 = (0u64..(1 << n))
        .map(|mask| w.weight(&Selection::from_mask(n, mask).unwrap()))
        .sum();
    let harmonic: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
    assert!((total - harmonic).abs() < 1e-10);
    assert!((total - 1.0).abs() > 0.5);
}

#[test]
fn tabular_policy_rejects_unnormalized_probabilities() {
    assert!(matches!(
        TabularPolicy::new(vec![0.5, 0.2, 0.1, 0.1]),
        Err(Error::Model(_))
    ));
    assert!(matches!(
        TabularPolicy::new(vec![1.2, -0.2, 0.0, 0.0]),
        Err(Error::Model(_))
    ));
    assert!(matches!(TabularPolicy::new(vec![0.5, 0.5, 0.0]), Err(Error::Dimension(_))));
}

#[test]
fn softmax_probability_on_a_large_population_is_a_capacity_error() {
    let pop = dummy_population(21);
    let pi = Policy::softmax(vec![0.0; 21], 1.0).unwrap();
    let a = Selection::empty(21);
    assert!(matches!(pi.prob_of_set(&a, &pop), Err(Error::Capacity(_))));
}

#[test]
fn parameterized_policies_round_trip_through_json() {
    let policies = vec![
        Policy::separable_linear(vec![0.25, 0.75]).unwrap(),
        Policy::softmax(vec![1.5, -0.5], 2.0).unwrap(),
        Policy::logistic_threshold(vec![0.1, 0.2, 0.3]).unwrap(),
    ];
    for pi in policies {
        let json = pi.to_json().unwrap();
        let back = Policy::from_json(&json).unwrap();
        let pop = dummy_population(2);
        if !matches!(back, Policy::LogisticThreshold(_)) {
            for mask in 0u64..4 {
                let a = Selection::from_mask(2, mask).unwrap();
                assert_eq!(pi.prob_of_set(&a, &pop).unwrap(), back.prob_of_set(&a, &pop).unwrap());
            }
        }
        assert_eq!(pi.family_name(), back.family_name());
    }
}

#[test]
fn tabular_policy_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.csv");
    let pi = TabularPolicy::new(never_d_without_a_probs()).unwrap();
    pi.write_csv(&path).unwrap();
    let back = TabularPolicy::read_csv(&path).unwrap();
    assert_eq!(pi.probs(), back.probs());
}
