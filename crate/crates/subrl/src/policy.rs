//! Parameterized stochastic policies with exact `∇ log π`.
//!
//! Three kinds share one parameter-vector representation `θ`:
//!
//! - **Tabular softmax** — one logit block per time-augmented state `(h, v)`;
//!   the gradient of `log π(a | h, v)` in its block is `onehot(a) − probs`.
//! - **MLP** — two ReLU hidden layers over the Markovian observation
//!   `onehot(v) ⧺ [h/H]`, linear logits, softmax head; gradients by manual
//!   reverse-mode differentiation.
//! - **History MLP** — the same network over a sliding window of the last `k`
//!   visited states (`k` one-hot blocks, zero-padded before step `k−1`,
//!   current state in the last block) plus the `h/H` scalar. With `k = 1` the
//!   feature vector coincides with the Markovian MLP layout.
//!
//! Observations are presented to the network as sparse index/value pairs, so
//! the first layer costs `O(active · hidden)` instead of
//! `O(features · hidden)` — a large win for history windows, whose features
//! are mostly zeros.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature-map choice; determines what the policy conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationKind {
    /// `onehot(v) ⧺ [h/H]` — Markovian over time-augmented states.
    OneHotStateTime,
    /// `onehot(v)` only — stationary Markovian.
    OneHotStateOnly,
    /// `k` one-hot state blocks (sliding window, zero-padded) ⧺ `[h/H]`.
    HistoryWindow { window: usize },
}

/// Observation layout: feature kind plus the dimensions needed to realize it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationSpec {
    /// Feature-map kind.
    pub kind: ObservationKind,
    /// Number of states `|V|` (one-hot width).
    pub num_states: usize,
    /// Horizon `H`, the normalizer of the time feature.
    pub horizon: usize,
}

impl ObservationSpec {
    /// Length of the dense feature vector this spec describes.
    pub fn feature_len(&self) -> usize {
        match self.kind {
            ObservationKind::OneHotStateTime => self.num_states + 1,
            ObservationKind::OneHotStateOnly => self.num_states,
            ObservationKind::HistoryWindow { window } => window * self.num_states + 1,
        }
    }

    /// Sparse features for the prefix `hist[0..=h]` of visited states.
    fn features(&self, h: usize, hist: &[usize]) -> Vec<(usize, f64)> {
        let time = h as f64 / self.horizon.max(1) as f64;
        match self.kind {
            ObservationKind::OneHotStateTime => {
                vec![(hist[h], 1.0), (self.num_states, time)]
            }
            ObservationKind::OneHotStateOnly => vec![(hist[h], 1.0)],
            ObservationKind::HistoryWindow { window } => {
                let mut active = Vec::with_capacity(window + 1);
                for i in 0..window {
                    // Block i holds the state visited at time h - (window-1) + i;
                    // earlier blocks stay zero while the window is not yet full.
                    let t = (h + 1 + i).checked_sub(window);
                    if let Some(t) = t {
                        active.push((i * self.num_states + hist[t], 1.0));
                    }
                }
                active.push((window * self.num_states, time));
                active
            }
        }
    }
}

/// MLP shape: two ReLU hidden layers of equal width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    /// Width of each hidden layer.
    pub hidden: usize,
}

/// Policy family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    TabularSoftmax,
    Mlp,
    HistoryMlp,
}

/// A differentiable stochastic policy `π_θ(a | observation)`.
#[derive(Debug, Clone)]
pub struct Policy {
    kind: PolicyKind,
    spec: ObservationSpec,
    arch: Option<MlpArch>,
    num_actions: usize,
    theta: Vec<f64>,
}

/// One observation: the time index and the visited-state prefix
/// `hist[0..=h]` (so `hist[h]` is the current state).
#[derive(Debug, Clone, Copy)]
pub struct Obs<'a> {
    /// Current time `h`.
    pub h: usize,
    /// Visited states `s_0, …, s_h` (at least `h+1` entries).
    pub hist: &'a [usize],
}

/// Result of a forward pass: the action distribution plus the cached
/// intermediate values reverse mode needs.
pub struct Forward {
    /// Softmax action probabilities; strictly positive, sums to 1.
    pub probs: Vec<f64>,
    cache: Cache,
}

enum Cache {
    Tabular { block: usize },
    Mlp { feats: Vec<(usize, f64)>, a1: Vec<f64>, a2: Vec<f64> },
}

impl Policy {
    /// Tabular softmax keyed on `(h, v)`; logits start at zero (uniform).
    pub fn new_tabular(num_states: usize, num_actions: usize, horizon: usize) -> Policy {
        Policy {
            kind: PolicyKind::TabularSoftmax,
            spec: ObservationSpec {
                kind: ObservationKind::OneHotStateTime,
                num_states,
                horizon,
            },
            arch: None,
            num_actions,
            theta: vec![0.0; horizon.max(1) * num_states * num_actions],
        }
    }

    /// Markovian MLP over `onehot(v) ⧺ [h/H]`.
    pub fn new_mlp(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        arch: MlpArch,
        rng: &mut impl Rng,
    ) -> Policy {
        let spec =
            ObservationSpec { kind: ObservationKind::OneHotStateTime, num_states, horizon };
        Self::new_network(PolicyKind::Mlp, spec, arch, num_actions, rng)
    }

    /// Non-Markovian MLP over a history window of `window ≥ 1` states.
    pub fn new_history_mlp(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        window: usize,
        arch: MlpArch,
        rng: &mut impl Rng,
    ) -> Policy {
        let spec = ObservationSpec {
            kind: ObservationKind::HistoryWindow { window: window.max(1) },
            num_states,
            horizon,
        };
        Self::new_network(PolicyKind::HistoryMlp, spec, arch, num_actions, rng)
    }

    fn new_network(
        kind: PolicyKind,
        spec: ObservationSpec,
        arch: MlpArch,
        num_actions: usize,
        rng: &mut impl Rng,
    ) -> Policy {
        let dims = MlpDims::new(spec.feature_len(), arch.hidden, num_actions);
        let mut theta = vec![0.0; dims.param_count()];
        // Weights U(±1/√fan_in), biases zero.
        let lim_in = 1.0 / (dims.input as f64).sqrt();
        let lim_hid = 1.0 / (dims.hidden as f64).sqrt();
        for w in &mut theta[dims.w1.clone()] {
            *w = rng.random_range(-lim_in..lim_in);
        }
        for w in &mut theta[dims.w2.clone()] {
            *w = rng.random_range(-lim_hid..lim_hid);
        }
        for w in &mut theta[dims.w3.clone()] {
            *w = rng.random_range(-lim_hid..lim_hid);
        }
        Policy { kind, spec, arch: Some(arch), num_actions, theta }
    }

    /// Reassembles a policy from checkpoint metadata and parameters.
    pub fn from_parts(
        kind: PolicyKind,
        spec: ObservationSpec,
        arch: Option<MlpArch>,
        num_actions: usize,
        theta: Vec<f64>,
    ) -> Result<Policy> {
        let expected = match kind {
            PolicyKind::TabularSoftmax => {
                spec.horizon.max(1) * spec.num_states * num_actions
            }
            PolicyKind::Mlp | PolicyKind::HistoryMlp => {
                let arch = arch.ok_or_else(|| {
                    Error::Config("network policies need an architecture".into())
                })?;
                MlpDims::new(spec.feature_len(), arch.hidden, num_actions).param_count()
            }
        };
        if theta.len() != expected {
            return Err(Error::Config(format!(
                "parameter vector has {} entries, expected {expected}",
                theta.len()
            )));
        }
        Ok(Policy { kind, spec, arch, num_actions, theta })
    }

    /// Policy family.
    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    /// Observation layout.
    pub fn spec(&self) -> &ObservationSpec {
        &self.spec
    }

    /// Network architecture, when the policy is an MLP.
    pub fn arch(&self) -> Option<MlpArch> {
        self.arch
    }

    /// Number of actions.
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Parameter vector `θ`.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Mutable parameter vector (the optimizer's handle).
    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Number of parameters.
    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    /// Forward pass: action distribution plus reverse-mode cache.
    pub fn forward(&self, obs: Obs<'_>) -> Forward {
        debug_assert!(obs.hist.len() > obs.h, "history must include the current state");
        match self.kind {
            PolicyKind::TabularSoftmax => {
                let block =
                    (obs.h * self.spec.num_states + obs.hist[obs.h]) * self.num_actions;
                let logits = &self.theta[block..block + self.num_actions];
                Forward { probs: softmax(logits), cache: Cache::Tabular { block } }
            }
            PolicyKind::Mlp | PolicyKind::HistoryMlp => {
                let dims = self.dims();
                let feats = self.spec.features(obs.h, obs.hist);
                let t = &self.theta;
                let mut a1 = t[dims.b1.clone()].to_vec();
                for &(i, val) in &feats {
                    let col = &t[dims.w1.start + i * dims.hidden
                        ..dims.w1.start + (i + 1) * dims.hidden];
                    for (j, w) in col.iter().enumerate() {
                        a1[j] += w * val;
                    }
                }
                for z in &mut a1 {
                    *z = z.max(0.0);
                }
                let mut a2 = t[dims.b2.clone()].to_vec();
                for (j, &a) in a1.iter().enumerate() {
                    if a != 0.0 {
                        let row = &t[dims.w2.start + j * dims.hidden
                            ..dims.w2.start + (j + 1) * dims.hidden];
                        for (k, w) in row.iter().enumerate() {
                            a2[k] += w * a;
                        }
                    }
                }
                for z in &mut a2 {
                    *z = z.max(0.0);
                }
                let mut logits = t[dims.b3.clone()].to_vec();
                for (j, &a) in a2.iter().enumerate() {
                    if a != 0.0 {
                        let row = &t
                            [dims.w3.start + j * self.num_actions
                                ..dims.w3.start + (j + 1) * self.num_actions];
                        for (k, w) in row.iter().enumerate() {
                            logits[k] += w * a;
                        }
                    }
                }
                Forward { probs: softmax(&logits), cache: Cache::Mlp { feats, a1, a2 } }
            }
        }
    }

    /// Action distribution at `obs` (forward pass without keeping the cache).
    pub fn action_distribution(&self, obs: Obs<'_>) -> Vec<f64> {
        self.forward(obs).probs
    }

    /// Samples an action by inverse-CDF over the forward distribution.
    pub fn sample_action(&self, fwd: &Forward, rng: &mut impl Rng) -> usize {
        sample_categorical(&fwd.probs, rng)
    }

    /// Accumulates `scale · ∇_θ log π(a | obs)` into `acc`.
    pub fn accumulate_grad_log_prob(
        &self,
        fwd: &Forward,
        action: usize,
        scale: f64,
        acc: &mut [f64],
    ) {
        debug_assert_eq!(acc.len(), self.theta.len());
        let mut dlogits = Vec::with_capacity(self.num_actions);
        for (a, &p) in fwd.probs.iter().enumerate() {
            let indicator = if a == action { 1.0 } else { 0.0 };
            dlogits.push(scale * (indicator - p));
        }
        self.backprop_logits(fwd, &dlogits, acc);
    }

    /// Accumulates `scale · ∇_θ H(π(·|obs))` into `acc`, where `H` is the
    /// Shannon entropy of the action distribution. Through the softmax,
    /// `∂H/∂z_a = −p_a (ln p_a + H)`.
    pub fn accumulate_entropy_grad(&self, fwd: &Forward, scale: f64, acc: &mut [f64]) {
        let ent = entropy(&fwd.probs);
        let mut dlogits = Vec::with_capacity(self.num_actions);
        for &p in &fwd.probs {
            dlogits.push(scale * (-p * (p.ln() + ent)));
        }
        self.backprop_logits(fwd, &dlogits, acc);
    }

    fn backprop_logits(&self, fwd: &Forward, dlogits: &[f64], acc: &mut [f64]) {
        match &fwd.cache {
            Cache::Tabular { block } => {
                for (a, &d) in dlogits.iter().enumerate() {
                    acc[block + a] += d;
                }
            }
            Cache::Mlp { feats, a1, a2 } => {
                let dims = self.dims();
                let t = &self.theta;
                // Output layer.
                for (j, &a) in a2.iter().enumerate() {
                    if a != 0.0 {
                        let row = dims.w3.start + j * self.num_actions;
                        for (k, &d) in dlogits.iter().enumerate() {
                            acc[row + k] += d * a;
                        }
                    }
                }
                for (k, &d) in dlogits.iter().enumerate() {
                    acc[dims.b3.start + k] += d;
                }
                // Hidden layer 2 (ReLU mask: a2 > 0).
                let mut dz2 = vec![0.0; dims.hidden];
                for (j, da) in dz2.iter_mut().enumerate() {
                    if a2[j] > 0.0 {
                        let row = dims.w3.start + j * self.num_actions;
                        let mut s = 0.0;
                        for (k, &d) in dlogits.iter().enumerate() {
                            s += t[row + k] * d;
                        }
                        *da = s;
                    }
                }
                for (j, &a) in a1.iter().enumerate() {
                    if a != 0.0 {
                        let row = dims.w2.start + j * dims.hidden;
                        for (k, &d) in dz2.iter().enumerate() {
                            acc[row + k] += d * a;
                        }
                    }
                }
                for (k, &d) in dz2.iter().enumerate() {
                    acc[dims.b2.start + k] += d;
                }
                // Hidden layer 1 (ReLU mask: a1 > 0).
                let mut dz1 = vec![0.0; dims.hidden];
                for (j, da) in dz1.iter_mut().enumerate() {
                    if a1[j] > 0.0 {
                        let row = dims.w2.start + j * dims.hidden;
                        let mut s = 0.0;
                        for (k, &d) in dz2.iter().enumerate() {
                            s += t[row + k] * d;
                        }
                        *da = s;
                    }
                }
                for &(i, val) in feats {
                    if val != 0.0 {
                        let col = dims.w1.start + i * dims.hidden;
                        for (j, &d) in dz1.iter().enumerate() {
                            acc[col + j] += d * val;
                        }
                    }
                }
                for (j, &d) in dz1.iter().enumerate() {
                    acc[dims.b1.start + j] += d;
                }
            }
        }
    }

    /// Dense `∇_θ log π(a | obs)`; convenience wrapper for tests and oracles.
    pub fn grad_log_prob(&self, obs: Obs<'_>, action: usize) -> Vec<f64> {
        let fwd = self.forward(obs);
        let mut acc = vec![0.0; self.theta.len()];
        self.accumulate_grad_log_prob(&fwd, action, 1.0, &mut acc);
        acc
    }

    /// `log π(a | obs)`.
    pub fn log_prob(&self, obs: Obs<'_>, action: usize) -> f64 {
        self.forward(obs).probs[action].ln()
    }

    fn dims(&self) -> MlpDims {
        let arch = self.arch.expect("network policy always has an arch");
        MlpDims::new(self.spec.feature_len(), arch.hidden, self.num_actions)
    }
}

/// Parameter layout of the two-hidden-layer MLP inside the flat `θ`.
///
/// `w1` is stored column-major (`[input][hidden]`) so sparse features touch
/// contiguous memory; `w2`/`w3` are row-major over the source unit.
#[derive(Debug, Clone)]
struct MlpDims {
    input: usize,
    hidden: usize,
    w1: std::ops::Range<usize>,
    b1: std::ops::Range<usize>,
    w2: std::ops::Range<usize>,
    b2: std::ops::Range<usize>,
    w3: std::ops::Range<usize>,
    b3: std::ops::Range<usize>,
}

impl MlpDims {
    fn new(input: usize, hidden: usize, actions: usize) -> MlpDims {
        let w1 = 0..input * hidden;
        let b1 = w1.end..w1.end + hidden;
        let w2 = b1.end..b1.end + hidden * hidden;
        let b2 = w2.end..w2.end + hidden;
        let w3 = b2.end..b2.end + hidden * actions;
        let b3 = w3.end..w3.end + actions;
        MlpDims { input, hidden, w1, b1, w2, b2, w3, b3 }
    }

    fn param_count(&self) -> usize {
        self.b3.end
    }
}

/// Magic bytes opening a policy checkpoint file.
const CHECKPOINT_MAGIC: &[u8; 8] = b"SUBRLPC1";

/// JSON header stored inside a checkpoint, ahead of the raw parameters.
#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    kind: PolicyKind,
    obs_spec: ObservationSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    arch: Option<MlpArch>,
    num_actions: usize,
    num_params: usize,
}

impl Policy {
    /// Writes the policy to `path`: magic, little-endian `u64` header
    /// length, JSON header, then `θ` as little-endian `f64` words.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let header = CheckpointHeader {
            kind: self.kind,
            obs_spec: self.spec,
            arch: self.arch,
            num_actions: self.num_actions,
            num_params: self.theta.len(),
        };
        let header_bytes = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + header_bytes.len() + 8 * self.theta.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        for &w in &self.theta {
            out.extend_from_slice(&w.to_le_bytes());
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Reads a checkpoint written by [`Policy::save`].
    pub fn load(path: &std::path::Path) -> Result<Policy> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Input(format!(
                "{} is not a policy checkpoint",
                path.display()
            )));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = 16 + header_len;
        if bytes.len() < body {
            return Err(Error::Input("checkpoint header truncated".into()));
        }
        let header: CheckpointHeader = serde_json::from_slice(&bytes[16..body])?;
        let payload = &bytes[body..];
        if payload.len() != 8 * header.num_params {
            return Err(Error::Input(format!(
                "checkpoint carries {} parameter bytes, header promises {}",
                payload.len(),
                8 * header.num_params
            )));
        }
        let theta: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Policy::from_parts(header.kind, header.obs_spec, header.arch, header.num_actions, theta)
    }
}

/// Numerically stable softmax; strictly positive output summing to 1.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Shannon entropy of a probability vector.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Inverse-CDF categorical sampling with a single uniform draw.
pub fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1 // numerical slack: CDF summed to slightly below 1
}
