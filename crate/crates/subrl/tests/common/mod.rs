//! Helpers shared by the integration-test suites: random small instances,
//! one reward of each kind, and policy-parameter noise.

#![allow(dead_code)] // each test target uses a different subset

use rand::seq::SliceRandom;
use rand::Rng;

use subrl::gp::GpParams;
use subrl::policy::Policy;
use subrl::rewards::{CoverageParams, ItemCollectionParams, ModularParams, Reward};
use subrl::smdp::Smdp;

/// Positive probability vector of length `n` (normalized exponentials).
pub fn random_simplex(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().ln()).collect();
    let sum: f64 = row.iter().sum();
    for p in &mut row {
        *p /= sum;
    }
    row
}

/// Fully stochastic process: every transition row and the initial
/// distribution have strictly positive entries, so every length-`horizon`
/// trajectory has positive probability.
pub fn random_smdp(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    rng: &mut impl Rng,
) -> Smdp {
    let initial = random_simplex(num_states, rng);
    let mut table = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        table.extend(random_simplex(num_states, rng));
    }
    Smdp::new_stationary(num_states, num_actions, horizon, initial, table).unwrap()
}

/// Deterministic process with a fixed start: one random successor per
/// `(v, a)` pair.
pub fn random_deterministic_smdp(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    rng: &mut impl Rng,
) -> Smdp {
    let successors: Vec<usize> =
        (0..num_states * num_actions).map(|_| rng.random_range(0..num_states)).collect();
    let table = subrl::smdp::deterministic_table(num_states, num_actions, |v, a| {
        successors[v * num_actions + a]
    });
    let start = rng.random_range(0..num_states);
    let initial = subrl::smdp::point_mass(num_states, start);
    Smdp::new_stationary(num_states, num_actions, horizon, initial, table).unwrap()
}

/// One randomly-parameterized reward of each kind over `num_states` states.
pub fn reward_menu(num_states: usize, rng: &mut impl Rng) -> Vec<Reward> {
    let coverage = Reward::WeightedCoverage(CoverageParams {
        grid_width: num_states,
        grid_height: 1,
        density: (0..num_states).map(|_| 0.1 + rng.random::<f64>()).collect(),
        footprint_radius: usize::from(rng.random::<f64>() < 0.5),
    });

    let mut ids: Vec<usize> = (0..num_states).collect();
    ids.shuffle(rng);
    let split = (num_states / 2).max(1);
    let (g1, g2) = ids.split_at(split);
    let mut groups = vec![g1.to_vec()];
    let mut quotas = vec![rng.random_range(1..=g1.len())];
    if !g2.is_empty() {
        groups.push(g2.to_vec());
        quotas.push(rng.random_range(1..=g2.len()));
    }
    let items = Reward::ItemCollection(ItemCollectionParams { num_states, groups, quotas });

    let gp = Reward::GpMutualInformation(GpParams {
        points: (0..num_states).map(|v| [v as f64, 0.0]).collect(),
        lengthscale: 1.2,
        signal_variance: 1.0,
        noise_variance: 0.5,
    });

    let modular = Reward::Modular(ModularParams {
        state_reward: (0..num_states).map(|_| rng.random::<f64>()).collect(),
        discount: if rng.random::<f64>() < 0.5 { 1.0 } else { 0.9 },
    });

    let menu = vec![coverage, items, gp, modular];
    for r in &menu {
        r.validate().unwrap();
    }
    menu
}

/// Overwrites every policy parameter with a uniform draw from `[-scale, scale]`.
pub fn randomize(policy: &mut Policy, scale: f64, rng: &mut impl Rng) {
    for w in policy.theta_mut() {
        *w = scale * (2.0 * rng.random::<f64>() - 1.0);
    }
}

/// Count-distinct-states reward: unit-density coverage strip with radius 0.
pub fn distinct_count(num_states: usize) -> Reward {
    Reward::WeightedCoverage(CoverageParams {
        grid_width: num_states,
        grid_height: 1,
        density: vec![1.0; num_states],
        footprint_radius: 0,
    })
}

/// Median of the values (average of the two central order statistics).
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    assert!(n > 0, "median of an empty slice");
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
