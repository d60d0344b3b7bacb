//! Finite controlled Markov processes with time-augmented states.
//!
//! A process is the tuple `⟨V, A, P, ρ, H⟩`: `num_states` states, `num_actions`
//! actions, horizon `H`, initial distribution `ρ` over `V`, and per-step
//! transition kernels `P_h(v' | v, a)` for `h ∈ [0, H-1]`. Submodular rewards
//! act on the *time-augmented* state `(h, v)`, so nothing here ever collapses
//! time indices; that projection belongs to the reward functions.
//!
//! Transition kernels are stored densely, one row of length `|V|` per
//! `(h, v, a)`. Stationary dynamics share a single table across all `h`
//! rather than materializing `H` copies, which keeps desk-scale grids (up to
//! ~10⁴ states) cheap. The JSON form always expands to the full
//! `[h][v][a][v']` nesting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for probability normalization checks.
pub const PROB_TOL: f64 = 1e-12;

/// Dense transition storage: either one table shared by every step or one
/// table per step. A table is a flat `[v][a][v']` row-major vector.
#[derive(Debug, Clone)]
enum Dynamics {
    Stationary(Vec<f64>),
    PerStep(Vec<Vec<f64>>),
}

/// A finite-horizon controlled Markov process.
#[derive(Debug, Clone)]
pub struct Smdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_dist: Vec<f64>,
    dynamics: Dynamics,
}

/// JSON wire format: the full `[h][v][a][v']` nesting.
#[derive(Serialize, Deserialize)]
struct SmdpJson {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_dist: Vec<f64>,
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
}

impl Smdp {
    /// Builds a process whose dynamics are identical at every step.
    ///
    /// `table` is flat `[v][a][v']` row-major with length `|V|·|A|·|V|`.
    pub fn new_stationary(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_dist: Vec<f64>,
        table: Vec<f64>,
    ) -> Result<Self> {
        let smdp = Smdp {
            num_states,
            num_actions,
            horizon,
            initial_dist,
            dynamics: Dynamics::Stationary(table),
        };
        smdp.validate()?;
        Ok(smdp)
    }

    /// Builds a process with one transition table per step `h ∈ [0, H-1]`.
    pub fn new_per_step(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_dist: Vec<f64>,
        tables: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let smdp = Smdp {
            num_states,
            num_actions,
            horizon,
            initial_dist,
            dynamics: Dynamics::PerStep(tables),
        };
        smdp.validate()?;
        Ok(smdp)
    }

    /// Number of states `|V|`.
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Number of actions `|A|`.
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Horizon `H` (a trajectory takes `H` actions and visits `H+1` states).
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Initial state distribution `ρ`.
    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// The transition row `P_h(· | v, a)`, a probability vector over `V`.
    ///
    /// # Panics
    /// Panics if `h ≥ H`, `v ≥ |V|`, or `a ≥ |A|`; rows exist for every
    /// in-range index by construction.
    pub fn row(&self, h: usize, v: usize, a: usize) -> &[f64] {
        assert!(h < self.horizon, "step {h} out of range for horizon {}", self.horizon);
        let n = self.num_states;
        let start = (v * self.num_actions + a) * n;
        let table = match &self.dynamics {
            Dynamics::Stationary(t) => t,
            Dynamics::PerStep(ts) => &ts[h],
        };
        &table[start..start + n]
    }

    /// States with positive initial probability.
    pub fn initial_support(&self) -> Vec<usize> {
        (0..self.num_states).filter(|&v| self.initial_dist[v] > 0.0).collect()
    }

    /// The unique start state, if `ρ` is a point mass.
    pub fn fixed_start(&self) -> Option<usize> {
        let support = self.initial_support();
        (support.len() == 1).then(|| support[0])
    }

    /// True iff every transition row is a point mass (probability 1 on one
    /// successor, within [`PROB_TOL`]).
    pub fn is_deterministic(&self) -> bool {
        for h in 0..self.horizon {
            for v in 0..self.num_states {
                for a in 0..self.num_actions {
                    let row = self.row(h, v, a);
                    if !row.iter().any(|&p| (p - 1.0).abs() <= PROB_TOL) {
                        return false;
                    }
                }
            }
            // Stationary dynamics: one step checked is every step checked.
            if matches!(self.dynamics, Dynamics::Stationary(_)) {
                break;
            }
        }
        true
    }

    /// The deterministic successor of `(h, v, a)`.
    ///
    /// Returns an error if the row is not a point mass.
    pub fn deterministic_successor(&self, h: usize, v: usize, a: usize) -> Result<usize> {
        let row = self.row(h, v, a);
        row.iter()
            .position(|&p| (p - 1.0).abs() <= PROB_TOL)
            .ok_or_else(|| {
                Error::Contract(format!("transition row (h={h}, v={v}, a={a}) is stochastic"))
            })
    }

    fn validate(&self) -> Result<()> {
        if self.num_states == 0 || self.num_actions == 0 {
            return Err(Error::Config("state and action counts must be positive".into()));
        }
        if self.initial_dist.len() != self.num_states {
            return Err(Error::Config(format!(
                "initial_dist has {} entries for {} states",
                self.initial_dist.len(),
                self.num_states
            )));
        }
        check_prob_vector(&self.initial_dist, "initial_dist")?;
        let expected = self.num_states * self.num_actions * self.num_states;
        let tables: Vec<&Vec<f64>> = match &self.dynamics {
            Dynamics::Stationary(t) => {
                if self.horizon > 0 {
                    vec![t]
                } else {
                    Vec::new()
                }
            }
            Dynamics::PerStep(ts) => {
                if ts.len() != self.horizon {
                    return Err(Error::Config(format!(
                        "{} transition tables supplied for horizon {}",
                        ts.len(),
                        self.horizon
                    )));
                }
                ts.iter().collect()
            }
        };
        for (h, table) in tables.iter().enumerate() {
            if table.len() != expected {
                return Err(Error::Config(format!(
                    "transition table {h} has {} entries, expected {expected}",
                    table.len()
                )));
            }
            for v in 0..self.num_states {
                for a in 0..self.num_actions {
                    let start = (v * self.num_actions + a) * self.num_states;
                    let row = &table[start..start + self.num_states];
                    check_prob_vector(row, &format!("transition row (h={h}, v={v}, a={a})"))?;
                }
            }
        }
        Ok(())
    }

    /// Serializes to the `[h][v][a][v']` JSON document.
    ///
    /// Stationary dynamics are expanded to `H` identical tables, matching the
    /// wire format exactly.
    pub fn to_json(&self) -> serde_json::Value {
        let mut transitions = Vec::with_capacity(self.horizon);
        for h in 0..self.horizon {
            let mut per_v = Vec::with_capacity(self.num_states);
            for v in 0..self.num_states {
                let mut per_a = Vec::with_capacity(self.num_actions);
                for a in 0..self.num_actions {
                    per_a.push(self.row(h, v, a).to_vec());
                }
                per_v.push(per_a);
            }
            transitions.push(per_v);
        }
        serde_json::to_value(SmdpJson {
            num_states: self.num_states,
            num_actions: self.num_actions,
            horizon: self.horizon,
            initial_dist: self.initial_dist.clone(),
            transitions,
        })
        .expect("serializing plain vectors cannot fail")
    }

    /// Parses and validates the `[h][v][a][v']` JSON document.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let raw: SmdpJson = serde_json::from_value(value.clone())?;
        let mut tables = Vec::with_capacity(raw.horizon);
        if raw.transitions.len() != raw.horizon {
            return Err(Error::Config(format!(
                "transitions has {} steps for horizon {}",
                raw.transitions.len(),
                raw.horizon
            )));
        }
        for per_v in &raw.transitions {
            let mut flat = Vec::with_capacity(raw.num_states * raw.num_actions * raw.num_states);
            if per_v.len() != raw.num_states {
                return Err(Error::Config("transition table state dimension mismatch".into()));
            }
            for per_a in per_v {
                if per_a.len() != raw.num_actions {
                    return Err(Error::Config("transition table action dimension mismatch".into()));
                }
                for row in per_a {
                    if row.len() != raw.num_states {
                        return Err(Error::Config("transition row length mismatch".into()));
                    }
                    flat.extend_from_slice(row);
                }
            }
            tables.push(flat);
        }
        Smdp::new_per_step(raw.num_states, raw.num_actions, raw.horizon, raw.initial_dist, tables)
    }

    /// Reads a process from a JSON file.
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        Smdp::from_json(&value)
    }
}

fn check_prob_vector(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::Config(format!("{what} has negative or non-finite entries")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::Config(format!("{what} sums to {sum}, expected 1")));
    }
    Ok(())
}

/// Builds the flat `[v][a][v']` table from a deterministic successor map.
pub fn deterministic_table(
    num_states: usize,
    num_actions: usize,
    successor: impl Fn(usize, usize) -> usize,
) -> Vec<f64> {
    let mut table = vec![0.0; num_states * num_actions * num_states];
    for v in 0..num_states {
        for a in 0..num_actions {
            let next = successor(v, a);
            assert!(next < num_states);
            table[(v * num_actions + a) * num_states + next] = 1.0;
        }
    }
    table
}

/// A point-mass initial distribution on `start`.
pub fn point_mass(num_states: usize, start: usize) -> Vec<f64> {
    let mut rho = vec![0.0; num_states];
    rho[start] = 1.0;
    rho
}
