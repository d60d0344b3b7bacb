//! Submodular reinforcement learning on finite-horizon MDPs.
//!
//! A *submodular MDP* is a finite controlled Markov process whose return is
//! not a sum of per-step rewards but a monotone submodular set function `F`
//! evaluated on the set of visited time-augmented states `(h, v)`. Diminishing
//! returns make revisits worthless (or worth less), which is the natural model
//! for coverage, item collection, and information-gathering tasks.
//!
//! The crate provides:
//!
//! - [`smdp`]: the process definition `⟨V, A, P, ρ, H⟩` with dense transition
//!   tables and JSON (de)serialization.
//! - [`rewards`]: monotone submodular reward functions (weighted coverage,
//!   item collection, GP mutual information, modular) with O(1)-amortized
//!   incremental marginal-gain evaluators, plus the `modularize` operator that
//!   flattens any of them to the additive surrogate `r(v) = F({v})`.
//! - [`gp`]: RBF-kernel Gaussian-process machinery behind the
//!   mutual-information reward — incremental log-determinants via rank-one
//!   Cholesky extension.
//! - [`policy`]: tabular-softmax, MLP, and history-window MLP policies with
//!   exact reverse-mode `∇ log π`.
//! - [`rollout`]: trajectory sampling with per-step marginal gains cached,
//!   so the telescoping identity `F(τ) = F({s₀}) + Σ_j F(s_{j+1} | τ_{0:j})`
//!   holds bit-for-bit.
//! - [`estimator`]: the marginal-gain policy-gradient estimator (`subpo`),
//!   the additive-surrogate baseline (`modpo`), history baselines, and the
//!   entropy regularizer.
//! - [`trainer`]: the batched policy-gradient training loop with SGD/Adam
//!   and reproducible learning curves.
//! - [`envs`]: grid worlds, two-rooms exploration, ε-bandit processes, and
//!   density-field builders.
//! - [`oracle`]: exact small-instance computations — enumerated `J(π)` and
//!   `∇J`, brute-force optima, greedy walks, submodularity / curvature /
//!   DR-submodularity verifiers.
//! - [`config`]: the experiment configuration schema shared with the CLI.
//!
//! Everything is deterministic given a master seed: random streams are
//! derived counter-style per (epoch, batch index), so batches can be rolled
//! out concurrently without losing bit-reproducibility.

pub mod config;
pub mod envs;
pub mod error;
pub mod estimator;
pub mod gp;
pub mod oracle;
pub mod policy;
pub mod rewards;
pub mod rng;
pub mod rollout;
pub mod smdp;
pub mod trainer;
pub mod trajectory;

pub use error::{Error, Result};
