//! Trajectory sampling.
//!
//! A rollout draws `s_0` from the initial distribution, then alternates
//! policy and transition sampling for `H` steps. The reward's incremental
//! evaluator runs alongside, so every trajectory carries its per-step
//! marginal gains `F(s_{j+1} | τ_{0:j})` — the quantities the gradient
//! estimators weight log-probabilities with. Summing them telescopes to the
//! set value `F(τ)` exactly (same additions in the same order).

use rand::Rng;

use crate::error::Result;
use crate::policy::{sample_categorical, Obs, Policy};
use crate::rewards::Reward;
use crate::smdp::Smdp;
use crate::trajectory::{Step, Trajectory};

/// Samples one trajectory of `smdp`'s full horizon under `policy`,
/// tracking marginal gains of `reward` along the way.
pub fn rollout(
    smdp: &Smdp,
    reward: &Reward,
    policy: &Policy,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    let horizon = smdp.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(sample_categorical(smdp.initial_dist(), rng));

    let mut eval = reward.fresh_evaluator();
    let initial_value = reward.gain(&mut eval, 0, states[0])?;

    let mut steps = Vec::with_capacity(horizon);
    let mut marginal_gains = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let state = states[h];
        let fwd = policy.forward(Obs { h, hist: &states });
        let action = policy.sample_action(&fwd, rng);
        let next = sample_categorical(smdp.row(h, state, action), rng);
        marginal_gains.push(reward.gain(&mut eval, h + 1, next)?);
        steps.push(Step { h, state, action });
        states.push(next);
    }

    let final_state = states[horizon];
    Ok(Trajectory { steps, final_state, marginal_gains, initial_value })
}
