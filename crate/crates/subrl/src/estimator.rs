//! Policy-gradient estimators over batches of rollouts.
//!
//! The marginal-gain estimator weights each step's score
//! `∇_θ log π(a_i | s_i)` by the **returns-to-go of marginal gains**
//! `Σ_{j≥i} F(s_{j+1} | τ_{0:j}) − b_i`: credit only what the suffix still
//! adds on top of the prefix. The additive-baseline estimator (the modular
//! comparison method) runs the identical machinery with per-step rewards
//! `r(s_{j+1}) = F({s_{j+1}})` — revisits get paid again, which is exactly
//! the failure mode it exists to demonstrate.
//!
//! The baseline is a per-timestep state: either identically zero or an
//! exponential moving average of batch-mean returns-to-go. It is *frozen
//! while a batch's gradient is computed* and updated only between epochs, so
//! within an epoch it is a fixed function of the history index and the
//! estimator stays unbiased.
//!
//! Batch reduction is a plain indexed fold — contributions enter the
//! accumulator in batch order, making the result independent of how the
//! rollouts themselves were produced.

use crate::error::{Error, Result};
use crate::policy::{entropy, Obs, Policy};
use crate::rewards::Reward;
use crate::trajectory::Trajectory;

/// A batch gradient with its diagnostics.
#[derive(Debug, Clone)]
pub struct GradientEstimate {
    /// Estimated ascent direction; length = number of policy parameters.
    pub grad: Vec<f64>,
    /// Number of trajectories averaged.
    pub batch_size: usize,
    /// Batch mean of the objective the estimator optimizes.
    pub mean_return: f64,
    /// Mean policy entropy over all visited decision states in the batch.
    pub mean_entropy: f64,
    /// Batch-mean returns-to-go per timestep; feed to [`BaselineState::update`].
    pub mean_returns_to_go: Vec<f64>,
}

impl GradientEstimate {
    /// True when every gradient entry is finite.
    pub fn is_finite(&self) -> bool {
        self.grad.iter().all(|g| g.is_finite())
    }
}

/// Baseline `b(τ_{0:i})`: zero, or a per-timestep EMA of returns-to-go.
#[derive(Debug, Clone)]
pub struct BaselineState {
    beta: f64,
    /// One slot per timestep `i ∈ [0, H)`; `None` until first update.
    values: Option<Vec<f64>>,
    horizon: usize,
    ema: bool,
}

impl BaselineState {
    /// The zero baseline: plain REINFORCE-style weights.
    pub fn zero(horizon: usize) -> BaselineState {
        BaselineState { beta: 0.0, values: None, horizon, ema: false }
    }

    /// EMA baseline with decay `beta` (0.9 is the trainer default).
    pub fn ema(beta: f64, horizon: usize) -> BaselineState {
        BaselineState { beta, values: None, horizon, ema: true }
    }

    /// Baseline value at timestep `i`; zero until the first update.
    pub fn value_at(&self, i: usize) -> f64 {
        match &self.values {
            Some(v) => v[i],
            None => 0.0,
        }
    }

    /// Folds one epoch's batch-mean returns-to-go into the EMA. A no-op in
    /// zero mode. The first update seeds the EMA directly.
    pub fn update(&mut self, mean_returns_to_go: &[f64]) {
        if !self.ema {
            return;
        }
        debug_assert_eq!(mean_returns_to_go.len(), self.horizon);
        match &mut self.values {
            Some(values) => {
                for (v, &m) in values.iter_mut().zip(mean_returns_to_go) {
                    *v = self.beta * *v + (1.0 - self.beta) * m;
                }
            }
            None => self.values = Some(mean_returns_to_go.to_vec()),
        }
    }
}

/// Marginal-gain policy gradient: scores weighted by suffix sums of the
/// trajectories' recorded marginal gains, minus the baseline.
pub fn subpo_gradient(
    batch: &[Trajectory],
    policy: &Policy,
    baseline: &BaselineState,
) -> Result<GradientEstimate> {
    gradient_core(batch, policy, baseline, |traj| {
        if traj.marginal_gains.len() != traj.steps.len() {
            return Err(Error::Contract(
                "trajectory is missing marginal gains".into(),
            ));
        }
        Ok((traj.marginal_gains.clone(), traj.initial_value))
    })
}

/// Additive-reward policy gradient: the same machinery with per-step rewards
/// `r(s_{j+1})` taken from `modular` (normally `reward.modularize()`),
/// ignoring the trajectories' recorded gains.
pub fn modpo_gradient(
    batch: &[Trajectory],
    policy: &Policy,
    baseline: &BaselineState,
    modular: &Reward,
) -> Result<GradientEstimate> {
    gradient_core(batch, policy, baseline, |traj| {
        let mut rewards = Vec::with_capacity(traj.steps.len());
        for (j, step) in traj.steps.iter().enumerate() {
            let next = if j + 1 < traj.steps.len() {
                traj.steps[j + 1].state
            } else {
                traj.final_state
            };
            rewards.push(modular.singleton(step.h + 1, next)?);
        }
        let initial = modular.singleton(0, traj.state_at(0))?;
        Ok((rewards, initial))
    })
}

fn gradient_core(
    batch: &[Trajectory],
    policy: &Policy,
    baseline: &BaselineState,
    per_step: impl Fn(&Trajectory) -> Result<(Vec<f64>, f64)>,
) -> Result<GradientEstimate> {
    if batch.is_empty() {
        return Err(Error::Contract("gradient needs a non-empty batch".into()));
    }
    let horizon = batch[0].horizon();
    let inv_b = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; policy.num_params()];
    let mut mean_return = 0.0;
    let mut entropy_sum = 0.0;
    let mut mean_rtg = vec![0.0; horizon];

    for traj in batch {
        if traj.horizon() != horizon {
            return Err(Error::Contract("batch mixes trajectory horizons".into()));
        }
        let (rewards, initial) = per_step(traj)?;
        mean_return += inv_b * (initial + rewards.iter().sum::<f64>());

        // Suffix sums: rtg[i] = Σ_{j ≥ i} rewards[j].
        let mut rtg = vec![0.0; horizon];
        let mut acc = 0.0;
        for i in (0..horizon).rev() {
            acc += rewards[i];
            rtg[i] = acc;
        }
        for (m, &r) in mean_rtg.iter_mut().zip(&rtg) {
            *m += inv_b * r;
        }

        let states = traj.states();
        for (i, step) in traj.steps.iter().enumerate() {
            let fwd = policy.forward(Obs { h: i, hist: &states });
            entropy_sum += entropy(&fwd.probs);
            let weight = rtg[i] - baseline.value_at(i);
            policy.accumulate_grad_log_prob(&fwd, step.action, inv_b * weight, &mut grad);
        }
    }

    let decisions = (batch.len() * horizon).max(1) as f64;
    Ok(GradientEstimate {
        grad,
        batch_size: batch.len(),
        mean_return,
        mean_entropy: entropy_sum / decisions,
        mean_returns_to_go: mean_rtg,
    })
}

/// Gradient of `coefficient · Σ_h H(π_θ(·|s_h))` averaged over the batch;
/// added to the estimator gradient for soft (entropy-regularized) updates.
pub fn entropy_gradient(
    batch: &[Trajectory],
    policy: &Policy,
    coefficient: f64,
) -> Result<GradientEstimate> {
    if batch.is_empty() {
        return Err(Error::Contract("gradient needs a non-empty batch".into()));
    }
    let inv_b = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; policy.num_params()];
    let mut entropy_sum = 0.0;
    let horizon = batch[0].horizon();
    for traj in batch {
        let states = traj.states();
        for i in 0..traj.steps.len() {
            let fwd = policy.forward(Obs { h: i, hist: &states });
            entropy_sum += entropy(&fwd.probs);
            if coefficient != 0.0 {
                policy.accumulate_entropy_grad(&fwd, inv_b * coefficient, &mut grad);
            }
        }
    }
    let decisions = (batch.len() * horizon).max(1) as f64;
    Ok(GradientEstimate {
        grad,
        batch_size: batch.len(),
        mean_return: 0.0,
        mean_entropy: entropy_sum / decisions,
        mean_returns_to_go: vec![0.0; horizon],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Policy;
    use crate::rewards::{CoverageParams, ModularParams, Reward};
    use crate::rng::{stream, StreamTag};
    use crate::rollout::rollout;
    use crate::smdp::{deterministic_table, point_mass, Smdp};
    use crate::trajectory::Step;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn cycle_smdp(num_states: usize, horizon: usize) -> Smdp {
        // Action 0 advances around the cycle, action 1 stays.
        let table = deterministic_table(num_states, 2, |v, a| {
            if a == 0 {
                (v + 1) % num_states
            } else {
                v
            }
        });
        Smdp::new_stationary(num_states, 2, horizon, point_mass(num_states, 0), table)
            .unwrap()
    }

    fn distinct_count_reward(num_states: usize) -> Reward {
        Reward::WeightedCoverage(CoverageParams {
            grid_width: num_states,
            grid_height: 1,
            density: vec![1.0; num_states],
            footprint_radius: 0,
        })
    }

    fn sample_batch(
        smdp: &Smdp,
        reward: &Reward,
        policy: &Policy,
        n: u64,
        seed: u64,
    ) -> Vec<Trajectory> {
        (0..n)
            .map(|i| {
                let mut rng = stream(seed, StreamTag::Rollout, 0, i);
                rollout(smdp, reward, policy, &mut rng).unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_reward_gives_zero_gradient_for_both_estimators() {
        let smdp = cycle_smdp(3, 4);
        let zero = Reward::Modular(ModularParams {
            state_reward: vec![0.0; 3],
            discount: 1.0,
        });
        let policy = Policy::new_tabular(3, 2, 4);
        let batch = sample_batch(&smdp, &zero, &policy, 16, 1);
        let baseline = BaselineState::zero(4);
        let sub = subpo_gradient(&batch, &policy, &baseline).unwrap();
        let modular = zero.modularize().unwrap();
        let modp = modpo_gradient(&batch, &policy, &baseline, &modular).unwrap();
        assert!(sub.grad.iter().all(|&g| g == 0.0));
        assert!(modp.grad.iter().all(|&g| g == 0.0));
        assert_abs_diff_eq!(sub.mean_return, 0.0, epsilon = 0.0);
    }

    #[test]
    fn two_step_weights_are_suffix_sums_minus_baseline() {
        // One hand-built trajectory with gains (2.0, 5.0): the step-0 score
        // must be weighted by 7 − b₀ and the step-1 score by 5 − b₁.
        let mut policy = Policy::new_tabular(2, 2, 2);
        let mut rng = stream(2, StreamTag::Check, 0, 0);
        for i in 0..policy.num_params() {
            policy.theta_mut()[i] = rng.random_range(-1.0..1.0);
        }
        let traj = Trajectory {
            steps: vec![Step { h: 0, state: 0, action: 1 }, Step { h: 1, state: 1, action: 0 }],
            final_state: 0,
            marginal_gains: vec![2.0, 5.0],
            initial_value: 3.0,
        };
        let mut baseline = BaselineState::ema(0.9, 2);
        baseline.update(&[1.0, 0.5]);

        let states = [0usize, 1, 0];
        let mut expected = vec![0.0; policy.num_params()];
        let fwd0 = policy.forward(Obs { h: 0, hist: &states });
        policy.accumulate_grad_log_prob(&fwd0, 1, 7.0 - 1.0, &mut expected);
        let fwd1 = policy.forward(Obs { h: 1, hist: &states });
        policy.accumulate_grad_log_prob(&fwd1, 0, 5.0 - 0.5, &mut expected);

        let est = subpo_gradient(&[traj], &policy, &baseline).unwrap();
        for (g, e) in est.grad.iter().zip(&expected) {
            assert_abs_diff_eq!(g, e, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(est.mean_return, 10.0, epsilon = 0.0);
        assert_eq!(est.mean_returns_to_go, vec![7.0, 5.0]);
    }

    #[test]
    fn modular_reward_makes_both_estimators_identical() {
        // For a modular F the marginal gain at pair (h, v) equals the
        // singleton value γ^h·r(v) at every step — (h, v) pairs never repeat
        // within one trajectory because h increments — so the two estimators
        // coincide trajectory by trajectory, revisits included.
        let smdp = cycle_smdp(5, 3);
        let reward = Reward::Modular(ModularParams {
            state_reward: vec![0.3, 1.0, 0.1, 2.0, 0.7],
            discount: 1.0,
        });
        let policy = Policy::new_tabular(5, 2, 3);
        let batch = sample_batch(&smdp, &reward, &policy, 32, 3);
        let baseline = BaselineState::zero(3);
        let sub = subpo_gradient(&batch, &policy, &baseline).unwrap();
        let modular = reward.modularize().unwrap();
        let modp = modpo_gradient(&batch, &policy, &baseline, &modular).unwrap();
        for (a, b) in sub.grad.iter().zip(&modp.grad) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(sub.mean_return, modp.mean_return, epsilon = 1e-12);
    }

    #[test]
    fn revisits_separate_the_estimators_under_coverage() {
        // Hand-built revisit trajectory 0 → 1 → 0 with distinct-count F:
        // the marginal gain of the second visit to 0 is zero, but the
        // additive estimator pays F({0}) = 1 again, so step-0 weights differ
        // (2 vs 3) and the gradients cannot agree.
        let reward = distinct_count_reward(2);
        let policy = Policy::new_tabular(2, 2, 2);
        let traj = Trajectory {
            steps: vec![Step { h: 0, state: 0, action: 0 }, Step { h: 1, state: 1, action: 0 }],
            final_state: 0,
            marginal_gains: vec![1.0, 0.0],
            initial_value: 1.0,
        };
        let baseline = BaselineState::zero(2);
        let sub = subpo_gradient(std::slice::from_ref(&traj), &policy, &baseline).unwrap();
        let modular = reward.modularize().unwrap();
        let modp = modpo_gradient(&[traj], &policy, &baseline, &modular).unwrap();
        assert_eq!(sub.mean_returns_to_go, vec![1.0, 0.0]);
        assert_eq!(modp.mean_returns_to_go, vec![2.0, 1.0]);
        let diff: f64 = sub
            .grad
            .iter()
            .zip(&modp.grad)
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 0.1, "estimators should disagree, total diff {diff}");
    }

    #[test]
    fn ema_baseline_seeds_then_decays() {
        let mut b = BaselineState::ema(0.9, 2);
        assert_eq!(b.value_at(0), 0.0);
        b.update(&[10.0, 4.0]);
        assert_abs_diff_eq!(b.value_at(0), 10.0, epsilon = 0.0);
        b.update(&[0.0, 4.0]);
        assert_abs_diff_eq!(b.value_at(0), 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.value_at(1), 4.0, epsilon = 1e-12);
        let mut z = BaselineState::zero(2);
        z.update(&[10.0, 4.0]);
        assert_eq!(z.value_at(0), 0.0);
    }

    #[test]
    fn entropy_gradient_zero_coefficient_and_uniform_stationarity() {
        let smdp = cycle_smdp(3, 3);
        let reward = distinct_count_reward(3);
        let policy = Policy::new_tabular(3, 2, 3);
        let batch = sample_batch(&smdp, &reward, &policy, 8, 4);
        let zero_coeff = entropy_gradient(&batch, &policy, 0.0).unwrap();
        assert!(zero_coeff.grad.iter().all(|&g| g == 0.0));
        // Uniform tabular policy: entropy is maximal, so the gradient
        // vanishes even with a nonzero coefficient.
        let at_uniform = entropy_gradient(&batch, &policy, 0.5).unwrap();
        for g in at_uniform.grad {
            assert_abs_diff_eq!(g, 0.0, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(
            at_uniform.mean_entropy,
            (2.0f64).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn entropy_gradient_matches_finite_differences_at_skewed_logits() {
        let mut policy = Policy::new_tabular(1, 2, 1);
        policy.theta_mut()[0] = 1.0;
        let traj = Trajectory {
            steps: vec![Step { h: 0, state: 0, action: 0 }],
            final_state: 0,
            marginal_gains: vec![0.0],
            initial_value: 0.0,
        };
        let batch = vec![traj];
        let est = entropy_gradient(&batch, &policy, 1.0).unwrap();
        let step = 1e-6;
        for i in 0..policy.num_params() {
            let orig = policy.theta()[i];
            policy.theta_mut()[i] = orig + step;
            let up = entropy(&policy.action_distribution(Obs { h: 0, hist: &[0] }));
            policy.theta_mut()[i] = orig - step;
            let down = entropy(&policy.action_distribution(Obs { h: 0, hist: &[0] }));
            policy.theta_mut()[i] = orig;
            let fd = (up - down) / (2.0 * step);
            assert_abs_diff_eq!(est.grad[i], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let policy = Policy::new_tabular(2, 2, 2);
        let baseline = BaselineState::zero(2);
        assert!(subpo_gradient(&[], &policy, &baseline).is_err());
        assert!(entropy_gradient(&[], &policy, 1.0).is_err());
    }
}
