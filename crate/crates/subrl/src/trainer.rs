//! The training loop: batched rollouts → gradient estimate → optimizer
//! ascent step, with per-epoch learning-curve logging.
//!
//! Reproducibility is strict: rollout `b` of epoch `e` draws from the
//! dedicated stream `(seed, Rollout, e, b)`, batches reduce in batch order,
//! and the optimizer is exact arithmetic over those inputs — so two runs
//! with the same config and seed produce identical parameters and identical
//! curve numbers. Batch rollouts may execute concurrently (they are
//! independent by construction); the indexed collect preserves order.
//!
//! The per-epoch `mean_J`/`std_J` are always statistics of the *true* set
//! objective `F(τ)` over the training batch, even when the optimizer follows
//! the modular surrogate — that is precisely the comparison the additive
//! baseline exists for.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    entropy_gradient, modpo_gradient, subpo_gradient, BaselineState, GradientEstimate,
};
use crate::policy::Policy;
use crate::rewards::Reward;
use crate::rng::{stream, StreamTag};
use crate::rollout::rollout;
use crate::smdp::Smdp;
use crate::trajectory::Trajectory;

/// Which gradient estimator drives the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Marginal-gain returns-to-go (the submodular estimator).
    Subpo,
    /// Additive singleton rewards via the modularized objective.
    Modpo,
}

/// Optimizer family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Baseline mode for the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BaselineKind {
    /// No baseline subtraction.
    Zero,
    /// Per-timestep EMA of batch-mean returns-to-go.
    Ema { beta: f64 },
}

/// Training-run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Number of epochs `N ≥ 1`.
    pub epochs: usize,
    /// Rollouts per epoch `B ≥ 1`.
    pub batch_size: usize,
    /// Learning rate `α > 0`.
    pub learning_rate: f64,
    /// SGD or Adam (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
    pub optimizer: OptimizerKind,
    /// Entropy-regularization coefficient `α_H ≥ 0`.
    pub entropy_coeff: f64,
    /// Gradient estimator.
    pub estimator: EstimatorKind,
    /// Baseline mode.
    pub baseline: BaselineKind,
    /// Master seed for all rollout streams.
    pub seed: u64,
}

impl TrainConfig {
    /// Checks ranges: positive epochs/batch/learning rate, β ∈ [0, 1).
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be ≥ 1".into()));
        }
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.entropy_coeff < 0.0 {
            return Err(Error::Config("entropy coefficient must be ≥ 0".into()));
        }
        if let BaselineKind::Ema { beta } = self.baseline {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!("EMA decay must be in [0,1), got {beta}")));
            }
        }
        Ok(())
    }
}

/// One logged epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    /// Epoch index, 0-based.
    pub epoch: usize,
    /// Batch mean of `F(τ)`.
    pub mean_j: f64,
    /// Batch population standard deviation of `F(τ)`.
    pub std_j: f64,
    /// Mean policy entropy over the batch's decision states.
    pub mean_entropy: f64,
    /// Wall-clock milliseconds spent on the epoch.
    pub ms: u64,
}

/// Per-epoch training log; one row per epoch.
#[derive(Debug, Clone, Default)]
pub struct LearningCurve {
    /// Rows in epoch order.
    pub rows: Vec<CurveRow>,
}

impl LearningCurve {
    /// Serializes as CSV with the header `epoch,mean_J,std_J,mean_entropy,ms`.
    /// Floats print in shortest round-trip form, so equal runs produce equal
    /// bytes for every column except the wall-clock `ms`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_J,std_J,mean_entropy,ms\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.epoch, row.mean_j, row.std_j, row.mean_entropy, row.ms
            ));
        }
        out
    }

    /// Writes [`LearningCurve::to_csv`] to a file.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Mean `F(τ)` of the last epoch's batch.
    pub fn final_mean_j(&self) -> Option<f64> {
        self.rows.last().map(|r| r.mean_j)
    }
}

/// First-order optimizer state; updates are gradient *ascent*.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    /// Fresh optimizer state for `num_params` parameters.
    pub fn new(kind: OptimizerKind, learning_rate: f64, num_params: usize) -> Optimizer {
        let moments = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => num_params,
        };
        Optimizer { kind, learning_rate, m: vec![0.0; moments], v: vec![0.0; moments], t: 0 }
    }

    /// One ascent step in place: SGD `θ += α·g`; Adam the bias-corrected
    /// moment recurrence with the sign flipped to ascend.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(theta.len(), grad.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for (t, g) in theta.iter_mut().zip(grad) {
                    *t += self.learning_rate * g;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for i in 0..theta.len() {
                    self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
                    self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    theta[i] += self.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Runs the training loop, mutating `policy` in place, and returns the
/// learning curve. Aborts with diagnostics if a gradient turns non-finite.
pub fn train(
    smdp: &Smdp,
    reward: &Reward,
    policy: &mut Policy,
    config: &TrainConfig,
) -> Result<LearningCurve> {
    config.validate()?;
    let modular = match config.estimator {
        EstimatorKind::Modpo => Some(reward.modularize()?),
        EstimatorKind::Subpo => None,
    };
    let mut baseline = match config.baseline {
        BaselineKind::Zero => BaselineState::zero(smdp.horizon()),
        BaselineKind::Ema { beta } => BaselineState::ema(beta, smdp.horizon()),
    };
    let mut optimizer =
        Optimizer::new(config.optimizer, config.learning_rate, policy.num_params());
    let mut curve = LearningCurve::default();

    for epoch in 0..config.epochs {
        let clock = Instant::now();
        let batch = sample_epoch_batch(smdp, reward, policy, config, epoch as u64)?;

        let est = match &modular {
            None => subpo_gradient(&batch, policy, &baseline)?,
            Some(modular) => modpo_gradient(&batch, policy, &baseline, modular)?,
        };
        let mut grad = est.grad;
        if config.entropy_coeff > 0.0 {
            let ent = entropy_gradient(&batch, policy, config.entropy_coeff)?;
            for (g, e) in grad.iter_mut().zip(&ent.grad) {
                *g += e;
            }
        }
        let (mean_j, std_j) = batch_value_stats(&batch);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Contract(format!(
                "non-finite gradient at epoch {epoch}: mean_J = {mean_j}, estimator return = {}, |θ|∞ = {:e}",
                est.mean_return,
                policy.theta().iter().cloned().fold(0.0f64, |a, b| a.max(b.abs())),
            )));
        }

        optimizer.step(policy.theta_mut(), &grad);
        baseline.update(&est.mean_returns_to_go);
        curve.rows.push(CurveRow {
            epoch,
            mean_j,
            std_j,
            mean_entropy: est.mean_entropy,
            ms: clock.elapsed().as_millis() as u64,
        });
    }
    Ok(curve)
}

fn sample_epoch_batch(
    smdp: &Smdp,
    reward: &Reward,
    policy: &Policy,
    config: &TrainConfig,
    epoch: u64,
) -> Result<Vec<Trajectory>> {
    (0..config.batch_size as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(config.seed, StreamTag::Rollout, epoch, b);
            rollout(smdp, reward, policy, &mut rng)
        })
        .collect()
}

fn batch_value_stats(batch: &[Trajectory]) -> (f64, f64) {
    let n = batch.len() as f64;
    let mean = batch.iter().map(Trajectory::value).sum::<f64>() / n;
    let var = batch
        .iter()
        .map(|t| {
            let d = t.value() - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

/// Deterministic evaluation pass: `episodes` rollouts of `policy` on
/// dedicated evaluation streams `(seed, Eval, 0, i)`, returning the mean and
/// population standard deviation of `F(τ)`. Re-running with the same inputs
/// reproduces the identical statistics bit for bit.
pub fn evaluate_policy(
    smdp: &Smdp,
    reward: &Reward,
    policy: &Policy,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::Input("evaluation needs at least one episode".into()));
    }
    let batch: Vec<Trajectory> = (0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, StreamTag::Eval, 0, i);
            rollout(smdp, reward, policy, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(batch_value_stats(&batch))
}

/// Diagnostic view of one gradient estimate; used by the abort path and by
/// tests that want the raw estimate without an optimizer step.
pub fn estimate_once(
    smdp: &Smdp,
    reward: &Reward,
    policy: &Policy,
    config: &TrainConfig,
) -> Result<GradientEstimate> {
    let batch = sample_epoch_batch(smdp, reward, policy, config, 0)?;
    let baseline = match config.baseline {
        BaselineKind::Zero => BaselineState::zero(smdp.horizon()),
        BaselineKind::Ema { beta } => BaselineState::ema(beta, smdp.horizon()),
    };
    match config.estimator {
        EstimatorKind::Subpo => subpo_gradient(&batch, policy, &baseline),
        EstimatorKind::Modpo => {
            let modular = reward.modularize()?;
            modpo_gradient(&batch, policy, &baseline, &modular)
        }
    }
}
