//! Monotone submodular reward functions with incremental evaluators.
//!
//! A reward is a set function `F` over time-augmented states `(h, v)` with
//! `F(∅) = 0`, monotone (`Δ(s|A) ≥ 0`) and submodular (`Δ(s|A) ≥ Δ(s|B)` for
//! `A ⊆ B`). Four kinds are provided:
//!
//! - **Weighted coverage** — each visited cell senses a Chebyshev-ball patch
//!   of radius `r` on a grid, clipped at the boundary; `F` is the density
//!   mass of the union of sensed patches. Time indices are dropped, so
//!   revisits gain nothing.
//! - **Item collection** — disjoint item groups `g_i` with quotas `d_i`;
//!   `F = Σ_i min(|S ∩ g_i|, d_i)` over distinct visited states.
//! - **GP mutual information** — each `(h, v)` pair is one noisy observation
//!   of a GP at location `x(v)`; `F = ½ log det(I + σ_n⁻²K)`. Observing the
//!   same location at a later step still helps (noise averaging), just less.
//! - **Modular** — the classical additive reward `F(A) = Σ_{(h,v)∈A} γ^h r(v)`
//!   (`γ = 1` by default), the strict special case recovering ordinary MDPs.
//!
//! Every kind offers an `O(|patch|)`-amortized incremental [`gain`] for use
//! inside rollouts and a from-scratch [`evaluate`] reference path. For MI the
//! from-scratch path replays the Cholesky extensions in ascending `(h, v)`
//! order — exactly the visit order of a trajectory — so the two paths agree
//! bit-for-bit along rollouts.
//!
//! [`gain`]: Reward::gain
//! [`evaluate`]: Reward::evaluate

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::gp::{self, CholState, GpParams};
use crate::trajectory::VisitedSet;

/// Weighted-coverage parameters: a density field on a grid plus the sensing
/// radius. State `v` is the cell `(x, y) = (v mod width, v div width)`.
#[derive(Debug, Clone)]
pub struct CoverageParams {
    /// Grid width in cells.
    pub grid_width: usize,
    /// Grid height in cells.
    pub grid_height: usize,
    /// Nonnegative cell weights `ρ(v)`, row-major, length `width·height`.
    pub density: Vec<f64>,
    /// Chebyshev radius of the sensed square patch.
    pub footprint_radius: usize,
}

/// Item-collection parameters: pairwise-disjoint groups with quotas.
#[derive(Debug, Clone)]
pub struct ItemCollectionParams {
    /// Ground-set size `|V|`.
    pub num_states: usize,
    /// Pairwise-disjoint state subsets `g_i`.
    pub groups: Vec<Vec<usize>>,
    /// Per-group quotas `d_i`, with `1 ≤ d_i ≤ |g_i|`.
    pub quotas: Vec<usize>,
}

/// Modular (additive) parameters: per-state rewards and a step discount.
#[derive(Debug, Clone)]
pub struct ModularParams {
    /// Per-state reward `r(v)`.
    pub state_reward: Vec<f64>,
    /// Discount `γ ∈ (0, 1]` applied as `γ^h`; 1 leaves rewards undiscounted.
    pub discount: f64,
}

/// A monotone submodular reward function.
#[derive(Debug, Clone)]
pub enum Reward {
    /// Density mass of the union of sensed patches.
    WeightedCoverage(CoverageParams),
    /// Quota-capped distinct-item counting.
    ItemCollection(ItemCollectionParams),
    /// GP mutual information of the visited observation multiset.
    GpMutualInformation(GpParams),
    /// Additive per-state rewards (classical MDP return).
    Modular(ModularParams),
}

/// Kind-specific incremental evaluator state; one per rollout, single-owner.
///
/// `seen` enforces set semantics on `(h, v)` pairs: re-adding a pair that is
/// already in the represented set gains exactly zero for every kind.
#[derive(Debug, Clone)]
pub struct Evaluator {
    seen: BTreeSet<(usize, usize)>,
    inner: EvalInner,
}

#[derive(Debug, Clone)]
enum EvalInner {
    Coverage { covered: Vec<bool> },
    Items { visited: Vec<bool>, counts: Vec<usize> },
    Gp(CholState),
    Modular,
}

impl Reward {
    /// Checks parameter invariants (shapes, signs, disjointness, quotas).
    pub fn validate(&self) -> Result<()> {
        match self {
            Reward::WeightedCoverage(p) => {
                if p.grid_width == 0 || p.grid_height == 0 {
                    return Err(Error::Config("coverage grid must be non-empty".into()));
                }
                if p.density.len() != p.grid_width * p.grid_height {
                    return Err(Error::Config(format!(
                        "density has {} cells for a {}x{} grid",
                        p.density.len(),
                        p.grid_width,
                        p.grid_height
                    )));
                }
                if p.density.iter().any(|&w| !w.is_finite() || w < 0.0) {
                    return Err(Error::Config("density weights must be finite and ≥ 0".into()));
                }
            }
            Reward::ItemCollection(p) => {
                if p.groups.len() != p.quotas.len() {
                    return Err(Error::Config(format!(
                        "{} groups but {} quotas",
                        p.groups.len(),
                        p.quotas.len()
                    )));
                }
                let mut seen = vec![false; p.num_states];
                for (i, group) in p.groups.iter().enumerate() {
                    if p.quotas[i] == 0 || p.quotas[i] > group.len() {
                        return Err(Error::Config(format!(
                            "quota {} invalid for group {i} of size {}",
                            p.quotas[i],
                            group.len()
                        )));
                    }
                    for &v in group {
                        if v >= p.num_states {
                            return Err(Error::Config(format!("group member {v} out of range")));
                        }
                        if seen[v] {
                            return Err(Error::Config(format!(
                                "state {v} appears in more than one group"
                            )));
                        }
                        seen[v] = true;
                    }
                }
            }
            Reward::GpMutualInformation(p) => {
                p.validate()?;
                if p.points.is_empty() {
                    return Err(Error::Config("GP reward needs at least one location".into()));
                }
            }
            Reward::Modular(p) => {
                if p.state_reward.iter().any(|r| !r.is_finite()) {
                    return Err(Error::Config("state rewards must be finite".into()));
                }
                if !(p.discount > 0.0 && p.discount <= 1.0) {
                    return Err(Error::Config(format!(
                        "discount must lie in (0, 1], got {}",
                        p.discount
                    )));
                }
            }
        }
        Ok(())
    }

    /// Ground-set size `|V|` this reward is defined over.
    pub fn num_states(&self) -> usize {
        match self {
            Reward::WeightedCoverage(p) => p.grid_width * p.grid_height,
            Reward::ItemCollection(p) => p.num_states,
            Reward::GpMutualInformation(p) => p.points.len(),
            Reward::Modular(p) => p.state_reward.len(),
        }
    }

    /// Wire name of this kind.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Reward::WeightedCoverage(_) => "weighted_coverage",
            Reward::ItemCollection(_) => "item_collection",
            Reward::GpMutualInformation(_) => "gp_mutual_information",
            Reward::Modular(_) => "modular",
        }
    }

    /// True if time indices are dropped before evaluation (operator `T`):
    /// the function then only depends on the set of distinct states.
    pub fn drops_time(&self) -> bool {
        matches!(self, Reward::WeightedCoverage(_) | Reward::ItemCollection(_))
    }

    /// A fresh incremental evaluator representing the empty set.
    pub fn fresh_evaluator(&self) -> Evaluator {
        let inner = match self {
            Reward::WeightedCoverage(p) => {
                EvalInner::Coverage { covered: vec![false; p.density.len()] }
            }
            Reward::ItemCollection(p) => EvalInner::Items {
                visited: vec![false; p.num_states],
                counts: vec![0; p.groups.len()],
            },
            Reward::GpMutualInformation(_) => EvalInner::Gp(CholState::new()),
            Reward::Modular(_) => EvalInner::Modular,
        };
        Evaluator { seen: BTreeSet::new(), inner }
    }

    /// Marginal gain `F(A ∪ {(h,v)}) − F(A)` where `A` is the set represented
    /// by `state`; advances `state` to represent `A ∪ {(h,v)}`.
    pub fn gain(&self, state: &mut Evaluator, h: usize, v: usize) -> Result<f64> {
        if v >= self.num_states() {
            return Err(Error::Input(format!(
                "state id {v} out of range for ground set of {}",
                self.num_states()
            )));
        }
        if !state.seen.insert((h, v)) {
            return Ok(0.0); // set semantics: the pair is already present
        }
        match (self, &mut state.inner) {
            (Reward::WeightedCoverage(p), EvalInner::Coverage { covered }) => {
                let mut gained = 0.0;
                for cell in patch_cells(p.grid_width, p.grid_height, v, p.footprint_radius) {
                    if !covered[cell] {
                        covered[cell] = true;
                        gained += p.density[cell];
                    }
                }
                Ok(gained)
            }
            (Reward::ItemCollection(p), EvalInner::Items { visited, counts }) => {
                if visited[v] {
                    return Ok(0.0);
                }
                visited[v] = true;
                for (i, group) in p.groups.iter().enumerate() {
                    if group.contains(&v) {
                        if counts[i] < p.quotas[i] {
                            counts[i] += 1;
                            return Ok(1.0);
                        }
                        return Ok(0.0);
                    }
                }
                Ok(0.0)
            }
            (Reward::GpMutualInformation(p), EvalInner::Gp(chol)) => gp::mi_gain(p, chol, v),
            (Reward::Modular(p), EvalInner::Modular) => {
                Ok(p.discount.powi(h as i32) * p.state_reward[v])
            }
            _ => Err(Error::Contract("evaluator state does not match reward kind".into())),
        }
    }

    /// From-scratch value `F(set)`; the non-incremental reference path.
    ///
    /// Deterministic: elements are consumed in ascending `(h, v)` order.
    pub fn evaluate(&self, set: &VisitedSet) -> Result<f64> {
        for (_, v) in set.iter() {
            if v >= self.num_states() {
                return Err(Error::Input(format!(
                    "state id {v} out of range for ground set of {}",
                    self.num_states()
                )));
            }
        }
        match self {
            Reward::WeightedCoverage(p) => {
                let mut covered = vec![false; p.density.len()];
                for &v in &set.projected() {
                    for cell in patch_cells(p.grid_width, p.grid_height, v, p.footprint_radius) {
                        covered[cell] = true;
                    }
                }
                // Row-major accumulation: one canonical order for any set.
                let mut total = 0.0;
                for (cell, &is_covered) in covered.iter().enumerate() {
                    if is_covered {
                        total += p.density[cell];
                    }
                }
                Ok(total)
            }
            Reward::ItemCollection(p) => {
                let projected = set.projected();
                let mut total = 0.0;
                for (group, &quota) in p.groups.iter().zip(&p.quotas) {
                    let hits = group.iter().filter(|v| projected.contains(v)).count();
                    total += hits.min(quota) as f64;
                }
                Ok(total)
            }
            Reward::GpMutualInformation(p) => {
                let order: Vec<usize> = set.iter().map(|(_, v)| v).collect();
                gp::mutual_information(p, &order)
            }
            Reward::Modular(p) => {
                let mut total = 0.0;
                for (h, v) in set.iter() {
                    total += p.discount.powi(h as i32) * p.state_reward[v];
                }
                Ok(total)
            }
        }
    }

    /// Singleton value `F({(h, v)})`, via a fresh evaluator so it matches the
    /// incremental path exactly.
    pub fn singleton(&self, h: usize, v: usize) -> Result<f64> {
        let mut state = self.fresh_evaluator();
        self.gain(&mut state, h, v)
    }

    /// The additive surrogate: a modular reward with `r(v) = F({v})`.
    ///
    /// Modular input is returned unchanged (fixed point). This is the
    /// objective the `modpo` estimator maximizes.
    pub fn modularize(&self) -> Result<Reward> {
        if let Reward::Modular(p) = self {
            return Ok(Reward::Modular(p.clone()));
        }
        let state_reward = (0..self.num_states())
            .map(|v| self.singleton(0, v))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Reward::Modular(ModularParams { state_reward, discount: 1.0 }))
    }

    /// The ground set the randomized checks and curvature run over:
    /// `{(0, v)}` for time-dropping kinds (the function lives on `V`), all
    /// `(h, v)` pairs with `h ≤ horizon` otherwise.
    pub fn ground_set(&self, horizon: usize) -> Vec<(usize, usize)> {
        if self.drops_time() {
            (0..self.num_states()).map(|v| (0, v)).collect()
        } else {
            let mut out = Vec::with_capacity((horizon + 1) * self.num_states());
            for h in 0..=horizon {
                for v in 0..self.num_states() {
                    out.push((h, v));
                }
            }
            out
        }
    }
}

/// Cells of the Chebyshev ball of radius `r` around cell `v`, clipped at the
/// grid boundary, in row-major order.
fn patch_cells(
    width: usize,
    height: usize,
    v: usize,
    r: usize,
) -> impl Iterator<Item = usize> {
    let (x, y) = (v % width, v / width);
    let x_lo = x.saturating_sub(r);
    let x_hi = (x + r).min(width - 1);
    let y_lo = y.saturating_sub(r);
    let y_hi = (y + r).min(height - 1);
    (y_lo..=y_hi).flat_map(move |yy| (x_lo..=x_hi).map(move |xx| yy * width + xx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_coverage(width: usize, height: usize, r: usize) -> Reward {
        Reward::WeightedCoverage(CoverageParams {
            grid_width: width,
            grid_height: height,
            density: vec![1.0; width * height],
            footprint_radius: r,
        })
    }

    fn two_group_items() -> Reward {
        Reward::ItemCollection(ItemCollectionParams {
            num_states: 10,
            groups: vec![vec![1, 2, 3], vec![7, 8]],
            quotas: vec![2, 1],
        })
    }

    #[test]
    fn empty_set_is_zero_for_every_kind() {
        let rewards = [
            unit_coverage(3, 3, 1),
            two_group_items(),
            Reward::GpMutualInformation(GpParams {
                points: vec![[0.0, 0.0], [1.0, 0.0]],
                lengthscale: 1.0,
                signal_variance: 1.0,
                noise_variance: 0.5,
            }),
            Reward::Modular(ModularParams { state_reward: vec![1.0, 2.0], discount: 1.0 }),
        ];
        for r in &rewards {
            assert_eq!(r.evaluate(&VisitedSet::new()).unwrap(), 0.0, "{}", r.kind_name());
        }
    }

    #[test]
    fn radius_zero_coverage_counts_distinct_cells() {
        let r = unit_coverage(4, 4, 0);
        let set = VisitedSet::from_pairs([(0, 1), (1, 5), (2, 9), (3, 13)]);
        assert_eq!(r.evaluate(&set).unwrap(), 4.0);
        // Revisiting the same cell at a later time adds nothing.
        let set2 = VisitedSet::from_pairs([(0, 1), (1, 5), (2, 9), (3, 13), (4, 1)]);
        assert_eq!(r.evaluate(&set2).unwrap(), 4.0);
    }

    #[test]
    fn quota_caps_group_contribution() {
        // Three collected items of a quota-2 group contribute exactly 2.
        let r = two_group_items();
        let set = VisitedSet::from_pairs([(0, 1), (1, 2), (2, 3)]);
        assert_eq!(r.evaluate(&set).unwrap(), 2.0);
        // Plus one item of the quota-1 group: total 3.
        let set = VisitedSet::from_pairs([(0, 1), (1, 2), (2, 3), (3, 8)]);
        assert_eq!(r.evaluate(&set).unwrap(), 3.0);
    }

    #[test]
    fn empty_prefix_gain_is_singleton_value() {
        let r = unit_coverage(5, 5, 1);
        let mut state = r.fresh_evaluator();
        let gain = r.gain(&mut state, 0, 12).unwrap();
        assert_eq!(gain, 9.0); // interior 3x3 patch
        assert_eq!(gain, r.singleton(0, 12).unwrap());
    }

    #[test]
    fn coverage_revisit_gains_zero() {
        let r = unit_coverage(5, 5, 1);
        let mut state = r.fresh_evaluator();
        r.gain(&mut state, 0, 12).unwrap();
        assert_eq!(r.gain(&mut state, 1, 12).unwrap(), 0.0);
    }

    #[test]
    fn adjacent_patch_gain_matches_set_difference() {
        // 5x5 grid, radius 1. After covering the 3x3 patch around (1,1),
        // moving to (2,2) senses rows/cols 1..=3; the new cells are exactly
        // patch((2,2)) \ patch((1,1)).
        let r = unit_coverage(5, 5, 1);
        let mut state = r.fresh_evaluator();
        r.gain(&mut state, 0, 6).unwrap(); // cell (1,1)
        let gain = r.gain(&mut state, 1, 12).unwrap(); // cell (2,2)
        let patch_a: std::collections::BTreeSet<usize> = patch_cells(5, 5, 6, 1).collect();
        let patch_b: std::collections::BTreeSet<usize> = patch_cells(5, 5, 12, 1).collect();
        let expected = patch_b.difference(&patch_a).count() as f64;
        assert_eq!(gain, expected);
        assert_eq!(gain, 5.0);
    }

    #[test]
    fn boundary_patches_are_clipped() {
        let r = unit_coverage(5, 5, 1);
        assert_eq!(r.singleton(0, 0).unwrap(), 4.0); // corner: 2x2
        assert_eq!(r.singleton(0, 2).unwrap(), 6.0); // edge: 2x3
    }

    #[test]
    fn incremental_chain_matches_from_scratch() {
        use rand::Rng;
        let mut rng = crate::rng::stream(11, crate::rng::StreamTag::Check, 0, 0);
        let rewards = [unit_coverage(6, 4, 1), two_group_items()];
        for reward in &rewards {
            for _ in 0..100 {
                let len = rng.random_range(1..12);
                let mut state = reward.fresh_evaluator();
                let mut set = VisitedSet::new();
                let mut total = 0.0;
                for h in 0..len {
                    let v = rng.random_range(0..reward.num_states());
                    total += reward.gain(&mut state, h, v).unwrap();
                    set.insert(h, v);
                }
                assert_abs_diff_eq!(total, reward.evaluate(&set).unwrap(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn modular_gain_ignores_context() {
        let r = Reward::Modular(ModularParams {
            state_reward: vec![0.5, -1.25, 2.0],
            discount: 1.0,
        });
        // Same (h, v) contribution whatever came before.
        let mut a = r.fresh_evaluator();
        let mut b = r.fresh_evaluator();
        r.gain(&mut b, 0, 0).unwrap();
        r.gain(&mut b, 1, 2).unwrap();
        assert_eq!(r.gain(&mut a, 2, 1).unwrap(), r.gain(&mut b, 2, 1).unwrap());
    }

    #[test]
    fn modular_discount_weights_by_time() {
        let r = Reward::Modular(ModularParams { state_reward: vec![2.0], discount: 0.5 });
        assert_eq!(r.singleton(0, 0).unwrap(), 2.0);
        assert_eq!(r.singleton(2, 0).unwrap(), 0.5);
        // Same state at two different times both count (time-indexed kind).
        let set = VisitedSet::from_pairs([(0, 0), (2, 0)]);
        assert_eq!(r.evaluate(&set).unwrap(), 2.5);
    }

    #[test]
    fn modularize_fixed_point_and_singletons() {
        let modular =
            Reward::Modular(ModularParams { state_reward: vec![1.0, 3.0], discount: 0.9 });
        match modular.modularize().unwrap() {
            Reward::Modular(p) => {
                assert_eq!(p.state_reward, vec![1.0, 3.0]);
                assert_eq!(p.discount, 0.9);
            }
            other => panic!("expected modular, got {}", other.kind_name()),
        }

        // Coverage with r=0 and unit weights flattens to r(v) = 1.
        match unit_coverage(3, 3, 0).modularize().unwrap() {
            Reward::Modular(p) => assert_eq!(p.state_reward, vec![1.0; 9]),
            _ => unreachable!(),
        }

        // Item collection flattens to the group indicator.
        match two_group_items().modularize().unwrap() {
            Reward::Modular(p) => {
                let expected: Vec<f64> = (0..10)
                    .map(|v| if [1, 2, 3, 7, 8].contains(&v) { 1.0 } else { 0.0 })
                    .collect();
                assert_eq!(p.state_reward, expected);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn ground_set_respects_time_semantics() {
        assert_eq!(unit_coverage(2, 2, 0).ground_set(3).len(), 4);
        let modular = Reward::Modular(ModularParams { state_reward: vec![0.0; 3], discount: 1.0 });
        assert_eq!(modular.ground_set(2).len(), 9);
    }

    #[test]
    fn validation_rejects_overlapping_groups_and_bad_quotas() {
        let overlapping = Reward::ItemCollection(ItemCollectionParams {
            num_states: 5,
            groups: vec![vec![0, 1], vec![1, 2]],
            quotas: vec![1, 1],
        });
        assert!(overlapping.validate().is_err());
        let bad_quota = Reward::ItemCollection(ItemCollectionParams {
            num_states: 5,
            groups: vec![vec![0, 1]],
            quotas: vec![3],
        });
        assert!(bad_quota.validate().is_err());
    }

    #[test]
    fn out_of_range_state_is_an_input_error() {
        let r = unit_coverage(2, 2, 0);
        let set = VisitedSet::from_pairs([(0, 9)]);
        assert!(matches!(r.evaluate(&set), Err(Error::Input(_))));
        let mut state = r.fresh_evaluator();
        assert!(matches!(r.gain(&mut state, 0, 9), Err(Error::Input(_))));
    }
}
