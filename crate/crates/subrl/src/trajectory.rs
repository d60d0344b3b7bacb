//! Trajectories and visited-state sets.
//!
//! A trajectory of horizon `H` records the `H` executed `(h, state, action)`
//! steps, the final state reached at step `H`, the marginal gain
//! `F(s_{j+1} | τ_{0:j})` of each transition, and the value `F({(0, s₀)})` of
//! the start state. The telescoping identity
//! `F(τ) = F({s₀}) + Σ_j F(s_{j+1} | τ_{0:j})` makes the cached total exactly
//! the set-function value of the visited set.

use std::collections::BTreeSet;

/// One executed step: at time `h` the agent was in `state` and chose `action`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    /// Time index, `0 ≤ h < H`.
    pub h: usize,
    /// State occupied at time `h`.
    pub state: usize,
    /// Action taken at time `h`.
    pub action: usize,
}

/// A sampled trajectory with per-step marginal gains cached.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Exactly `H` steps, `h` increasing `0..H`.
    pub steps: Vec<Step>,
    /// State occupied at time `H`.
    pub final_state: usize,
    /// `marginal_gains[j] = F(s_{j+1} | τ_{0:j})`, one per step.
    pub marginal_gains: Vec<f64>,
    /// `F({(0, s₀)})`.
    pub initial_value: f64,
}

impl Trajectory {
    /// Horizon of this trajectory.
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// The `H + 1` visited states in time order `s₀, …, s_H`.
    pub fn states(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        out.extend(self.steps.iter().map(|s| s.state));
        out.push(self.final_state);
        out
    }

    /// State occupied at time `h`, for `0 ≤ h ≤ H`.
    pub fn state_at(&self, h: usize) -> usize {
        if h == self.steps.len() {
            self.final_state
        } else {
            self.steps[h].state
        }
    }

    /// Total value via the telescoping identity:
    /// `F({s₀}) + Σ_j F(s_{j+1} | τ_{0:j})`, summed left to right.
    pub fn value(&self) -> f64 {
        let mut total = self.initial_value;
        for g in &self.marginal_gains {
            total += g;
        }
        total
    }

    /// The set of visited time-augmented states `{(h, s_h)}`.
    pub fn visited(&self) -> VisitedSet {
        let mut set = VisitedSet::new();
        for step in &self.steps {
            set.insert(step.h, step.state);
        }
        set.insert(self.steps.len(), self.final_state);
        set
    }
}

/// A set of time-augmented states `(h, v)` with its time-dropped projection.
///
/// Iteration order is always ascending `(h, v)`, which keeps every
/// from-scratch evaluation deterministic regardless of insertion order. For
/// sets built from trajectories the `(h, v)` order coincides with visit order
/// because `h` strictly increases along a rollout.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VisitedSet {
    pairs: BTreeSet<(usize, usize)>,
}

impl VisitedSet {
    /// The empty set.
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds the set from `(h, v)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        VisitedSet { pairs: pairs.into_iter().collect() }
    }

    /// Inserts `(h, v)`; returns false if it was already present.
    pub fn insert(&mut self, h: usize, v: usize) -> bool {
        self.pairs.insert((h, v))
    }

    /// True iff `(h, v)` is present.
    pub fn contains(&self, h: usize, v: usize) -> bool {
        self.pairs.contains(&(h, v))
    }

    /// Number of `(h, v)` pairs.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// True iff no pair is present.
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs in ascending `(h, v)` order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    /// The time-dropped projection `{ v : (h, v) ∈ pairs }`, ascending.
    pub fn projected(&self) -> BTreeSet<usize> {
        self.pairs.iter().map(|&(_, v)| v).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn telescoping_total_is_initial_plus_gains() {
        let traj = Trajectory {
            steps: vec![
                Step { h: 0, state: 0, action: 1 },
                Step { h: 1, state: 2, action: 0 },
            ],
            final_state: 1,
            marginal_gains: vec![0.5, 0.25],
            initial_value: 1.0,
        };
        assert_eq!(traj.value(), 1.75);
        assert_eq!(traj.states(), vec![0, 2, 1]);
        assert_eq!(traj.state_at(2), 1);
    }

    #[test]
    fn visited_set_projects_and_dedups() {
        let mut set = VisitedSet::new();
        assert!(set.insert(0, 4));
        assert!(set.insert(1, 4));
        assert!(!set.insert(0, 4), "duplicate pair must not reinsert");
        assert_eq!(set.len(), 2);
        let projected: Vec<usize> = set.projected().into_iter().collect();
        assert_eq!(projected, vec![4]);
    }

    #[test]
    fn iteration_is_sorted_regardless_of_insert_order() {
        let set = VisitedSet::from_pairs([(2, 1), (0, 3), (1, 0), (0, 1)]);
        let order: Vec<(usize, usize)> = set.iter().collect();
        assert_eq!(order, vec![(0, 1), (0, 3), (1, 0), (2, 1)]);
    }

    #[test]
    fn trajectory_visited_includes_final_state() {
        let traj = Trajectory {
            steps: vec![Step { h: 0, state: 0, action: 0 }],
            final_state: 1,
            marginal_gains: vec![0.0],
            initial_value: 0.0,
        };
        let set = traj.visited();
        assert!(set.contains(0, 0));
        assert!(set.contains(1, 1));
        assert_eq!(set.len(), 2);
    }
}
