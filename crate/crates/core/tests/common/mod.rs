//! Shared fixtures and independent reference implementations for the
//! integration tests.
//!
//! Everything in here is deliberately written as plain loops over explicit
//! subset tables so it exercises none of the library's evaluation paths.
//! Subset masks use bit `k` for candidate `k` (candidate 0 = least
//! significant bit).

#![allow(dead_code)]

use meritsel_core::{OutcomeMatrix, Population};

/// Four-candidate worked example: candidates A, B, C, D (indices 0..3).
/// U({A,B}) = 2, U({A,C}) = 1, U({C,D}) = 1, every other subset 0.
pub fn example2_table() -> Vec<f64> {
    let mut v = vec![0.0; 16];
    v[0b0011] = 2.0; // {A,B}
    v[0b0101] = 1.0; // {A,C}
    v[0b1100] = 1.0; // {C,D}
    v
}

/// The "never D without A" policy on the worked example: probability 1/12 on
/// each subset except the four that contain D but not A.
pub fn never_d_without_a_probs() -> Vec<f64> {
    let mut probs = vec![0.0; 16];
    for mask in 0u32..16 {
        let has_a = mask & 0b0001 != 0;
        let has_d = mask & 0b1000 != 0;
        if !(has_d && !has_a) {
            probs[mask as usize] = 1.0 / 12.0;
        }
    }
    probs
}

/// A population whose features are irrelevant: `n` candidates, one zero
/// feature each, alternating group labels "m"/"f".
pub fn dummy_population(n: usize) -> Population {
    let ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
    let groups: Vec<String> = (0..n)
        .map(|i| if i % 2 == 0 { "m".to_string() } else { "f".to_string() })
        .collect();
    let features = vec![vec![0.0]; n];
    Population::new(ids, groups, features).unwrap()
}

pub fn matrix(rows: &[&[f64]]) -> OutcomeMatrix {
    OutcomeMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
}

/// Two-optimal-set counterexample: the support holds two maximizers
/// a = {0,2} (mass 2/3) and b = {1,3} (mass 1/3); swapping 0 out of a for 1
/// costs nothing (U({1,2}) = 1) while swapping 1 out of b for 0 is ruinous
/// (U({0,3}) = 0). The policy is locally stable yet prefers candidate 0 to
/// candidate 1.
pub fn two_optimal_set_instance() -> (Vec<f64>, Vec<f64>) {
    let mut table = vec![0.0; 16];
    table[0b0101] = 1.0; // {0,2}
    table[0b1010] = 1.0; // {1,3}
    table[0b0110] = 1.0; // {1,2}
    let mut probs = vec![0.0; 16];
    probs[0b0101] = 2.0 / 3.0;
    probs[0b1010] = 1.0 / 3.0;
    (table, probs)
}

// ---------------------------------------------------------------------------
// Brute-force oracles.
// ---------------------------------------------------------------------------

/// Marginal selection probabilities of an explicit subset distribution.
pub fn brute_marginals(probs: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            probs
                .iter()
                .enumerate()
                .filter(|(mask, _)| mask & (1 << i) != 0)
                .map(|(_, p)| p)
                .sum()
        })
        .collect()
}

/// Swap deviation by direct enumeration of every ordered pair.
pub fn brute_dev_swap(table: &[f64], probs: &[f64], n: usize) -> f64 {
    let marg = brute_marginals(probs, n);
    let mut dev = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pref = (marg[i] - marg[j]).max(0.0);
            if pref == 0.0 {
                continue;
            }
            let u_ij = brute_forced_utility(table, probs, 1 << i, 1 << j);
            let u_ji = brute_forced_utility(table, probs, 1 << j, 1 << i);
            dev += pref * (u_ji - u_ij).max(0.0);
        }
    }
    dev
}

/// Local deviation: sum of positive expected marginal contributions.
pub fn brute_dev_local(table: &[f64], probs: &[f64], n: usize) -> f64 {
    brute_emc(table, probs, n).iter().map(|d| d.max(0.0)).sum()
}

/// Expected utility of a stochastic selection: plain weighted sum over all
/// 2^n subsets.
pub fn brute_policy_utility(table: &[f64], probs: &[f64]) -> f64 {
    assert_eq!(table.len(), probs.len());
    probs.iter().zip(table).map(|(p, u)| p * u).sum()
}

/// Expected utility after forcing candidates in `include` in and `exclude`
/// out of every drawn subset.
pub fn brute_forced_utility(table: &[f64], probs: &[f64], include: u32, exclude: u32) -> f64 {
    let mut total = 0.0;
    for (mask, p) in probs.iter().enumerate() {
        let forced = (mask as u32 | include) & !exclude;
        total += p * table[forced as usize];
    }
    total
}

/// Expected marginal contribution of each candidate under the distribution
/// `probs`: sum over subsets of `π(a)·(U(a ∪ {i}) − U(a))`.
pub fn brute_emc(table: &[f64], probs: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for i in 0..n {
        let bit = 1u32 << i;
        for (mask, p) in probs.iter().enumerate() {
            let with = (mask as u32 | bit) as usize;
            out[i] += p * (table[with] - table[mask]);
        }
    }
    out
}

/// Shapley value via averaging marginal contributions over all n!
/// permutations — a completely different route from the subset-weighted sum.
pub fn brute_shapley_permutations(table: &[f64], n: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut totals = vec![0.0; n];
    let mut count = 0usize;
    permute(&mut order, 0, &mut |perm| {
        let mut mask = 0u32;
        for &i in perm {
            let before = table[mask as usize];
            mask |= 1 << i;
            totals[i] += table[mask as usize] - before;
        }
        count += 1;
    });
    totals.iter().map(|t| t / count as f64).collect()
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Central finite differences of a scalar function of a parameter vector.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[i] += h;
            lo[i] -= h;
            (f(&hi) - f(&lo)) / (2.0 * h)
        })
        .collect()
}

/// Product-of-Bernoullis probability of the subset `mask` under marginals
/// `theta`.
pub fn bernoulli_prob(theta: &[f64], mask: u32) -> f64 {
    theta
        .iter()
        .enumerate()
        .map(|(i, t)| if mask & (1 << i) != 0 { *t } else { 1.0 - t })
        .product()
}

/// All 2^n subset probabilities of a product-of-Bernoullis policy.
pub fn bernoulli_table(theta: &[f64]) -> Vec<f64> {
    let n = theta.len();
    (0..1u32 << n).map(|mask| bernoulli_prob(theta, mask)).collect()
}

/// Sample mean and standard error of a slice.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
