//! Experiment configuration: strict JSON blocks mapped onto environment,
//! reward, policy, and trainer constructors.
//!
//! A config file is a single JSON object with `environment`, `reward`,
//! `policy`, and `train` blocks, plus optional `eval`, `output_dir`, and
//! `seeds`. Parsing is strict twice over: serde rejects unknown or misspelled
//! keys, and each block re-checks that only fields its `kind`/`type`
//! understands are present, so a config cannot silently carry dead settings.
//! Relative file paths (`density_file`, `path`) resolve against the config
//! file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::envs::{
    build_density, build_epsilon_bandit, build_grid, build_two_rooms, two_rooms_dims,
    DensitySource, EpsilonBanditSpec, GaussianComponent, GridSpec, GridStart,
};
use crate::error::{Error, Result};
use crate::policy::{MlpArch, Policy};
use crate::rewards::{CoverageParams, ItemCollectionParams, ModularParams, Reward};
use crate::rng::{stream, StreamTag};
use crate::smdp::Smdp;
use crate::trainer::{BaselineKind, EstimatorKind, OptimizerKind, TrainConfig};

/// Hidden width used when an MLP policy block omits `hidden`.
pub const DEFAULT_HIDDEN: usize = 64;

/// A parsed experiment file plus its provenance.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    /// The parsed configuration.
    pub config: ExperimentConfig,
    /// SHA-256 of the raw file bytes, lower-case hex.
    pub hash: String,
    /// Directory the config file lives in; anchors relative paths.
    pub base_dir: PathBuf,
}

/// Reads and strictly parses an experiment file.
pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
    let config: ExperimentConfig = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Input(format!("config {} is invalid: {e}", path.display())))?;
    let base_dir = match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.to_path_buf(),
        _ => PathBuf::from("."),
    };
    Ok(LoadedConfig { config, hash: sha256_hex(&bytes), base_dir })
}

/// Lower-case hex SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Top-level experiment description.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Which decision process to build.
    pub environment: EnvironmentConfig,
    /// Which set function scores trajectories.
    pub reward: RewardConfig,
    /// Policy family and architecture.
    pub policy: PolicyConfig,
    /// Training-loop parameters (everything except the seed).
    pub train: TrainBlock,
    /// Post-training evaluation settings.
    #[serde(default)]
    pub eval: EvalBlock,
    /// Artifact directory; per-seed outputs land in `output_dir/seed_N/`.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Seeds to run; one independent training job each.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// Evaluation block: rollout count for the final policy.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalBlock {
    /// Fresh evaluation episodes per seed (≥ 1).
    #[serde(default = "default_episodes")]
    pub episodes: usize,
}

fn default_episodes() -> usize {
    256
}

impl Default for EvalBlock {
    fn default() -> Self {
        EvalBlock { episodes: default_episodes() }
    }
}

/// Everything an experiment run needs besides the policy and the seed.
#[derive(Debug, Clone)]
pub struct Experiment {
    /// The decision process.
    pub smdp: Smdp,
    /// The trajectory-set objective.
    pub reward: Reward,
    /// `(width, height)` when the state space is a grid; drives geometry-aware
    /// rewards (coverage patches, GP observation points).
    pub grid: Option<(usize, usize)>,
}

impl ExperimentConfig {
    /// Materializes the process and reward, cross-checking their shapes.
    pub fn build(&self, base_dir: &Path) -> Result<Experiment> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list must not be empty".into()));
        }
        if self.eval.episodes == 0 {
            return Err(Error::Config("eval.episodes must be at least 1".into()));
        }
        let built = self.environment.build(base_dir)?;
        let ctx = RewardContext {
            num_states: built.smdp.num_states(),
            grid: built.grid,
            base_dir,
        };
        let reward = self.reward.build(&ctx)?;
        Ok(Experiment { smdp: built.smdp, reward, grid: built.grid })
    }

    /// Builds a freshly initialized policy for one seed.
    pub fn make_policy(&self, smdp: &Smdp, seed: u64) -> Result<Policy> {
        self.policy.make_policy(smdp, seed)
    }

    /// Assembles and validates the trainer configuration for one seed.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let config = self.train.train_config(seed);
        config.validate()?;
        Ok(config)
    }
}

/// Environment families the CLI can build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    /// Rectangular grid world with optional slip noise.
    Grid,
    /// Two rooms joined by a one-cell-wide corridor; fixed corridor start.
    TwoRooms,
    /// State-independent ε-noisy state selection.
    EpsilonBandit,
    /// Load a serialized process from JSON.
    SmdpFile,
}

impl EnvKind {
    fn name(self) -> &'static str {
        match self {
            EnvKind::Grid => "grid",
            EnvKind::TwoRooms => "two_rooms",
            EnvKind::EpsilonBandit => "epsilon_bandit",
            EnvKind::SmdpFile => "smdp_file",
        }
    }
}

/// Starting rule for grid environments.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StartConfig {
    /// Always start at `cell`.
    Fixed { cell: usize },
    /// Uniform over all cells.
    Uniform,
}

/// Environment block: a `type` discriminator plus the union of per-type
/// fields. [`EnvironmentConfig::build`] rejects fields foreign to the type.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    /// Environment family.
    #[serde(rename = "type")]
    pub kind: EnvKind,
    /// Grid: cells per row.
    pub width: Option<usize>,
    /// Grid: rows.
    pub height: Option<usize>,
    /// Grid / two-rooms: steps per episode.
    pub horizon: Option<usize>,
    /// Grid: slip probability (default 0 = deterministic).
    pub slip: Option<f64>,
    /// Grid: starting rule (default uniform).
    pub start: Option<StartConfig>,
    /// Two-rooms: corridor length in cells.
    pub corridor_length: Option<usize>,
    /// Two-rooms: side length of each square room.
    pub room_size: Option<usize>,
    /// Bandit: number of states (= number of actions).
    pub num_states: Option<usize>,
    /// Bandit: one ε per step; the length sets the horizon.
    pub epsilons: Option<Vec<f64>>,
    /// File: path to a serialized process, relative to the config file.
    pub path: Option<PathBuf>,
}

/// An environment plus its grid geometry when it has one.
#[derive(Debug, Clone)]
pub struct BuiltEnvironment {
    /// The decision process.
    pub smdp: Smdp,
    /// `(width, height)` for grid-shaped state spaces.
    pub grid: Option<(usize, usize)>,
}

impl EnvironmentConfig {
    /// Builds the process, rejecting fields that don't apply to `type`.
    pub fn build(&self, base_dir: &Path) -> Result<BuiltEnvironment> {
        self.check_fields()?;
        let kind = self.kind.name();
        match self.kind {
            EnvKind::Grid => {
                let spec = GridSpec {
                    width: require(&self.width, "width", kind)?,
                    height: require(&self.height, "height", kind)?,
                    horizon: require(&self.horizon, "horizon", kind)?,
                    slip: self.slip.unwrap_or(0.0),
                    start: match self.start.unwrap_or(StartConfig::Uniform) {
                        StartConfig::Fixed { cell } => GridStart::Fixed(cell),
                        StartConfig::Uniform => GridStart::Uniform,
                    },
                };
                Ok(BuiltEnvironment {
                    smdp: build_grid(&spec)?,
                    grid: Some((spec.width, spec.height)),
                })
            }
            EnvKind::TwoRooms => {
                let corridor = require(&self.corridor_length, "corridor_length", kind)?;
                let room = require(&self.room_size, "room_size", kind)?;
                let horizon = require(&self.horizon, "horizon", kind)?;
                Ok(BuiltEnvironment {
                    smdp: build_two_rooms(corridor, room, horizon)?,
                    grid: Some(two_rooms_dims(corridor, room)),
                })
            }
            EnvKind::EpsilonBandit => {
                let spec = EpsilonBanditSpec {
                    num_states: require(&self.num_states, "num_states", kind)?,
                    epsilons: require_ref(&self.epsilons, "epsilons", kind)?.clone(),
                };
                Ok(BuiltEnvironment { smdp: build_epsilon_bandit(&spec)?, grid: None })
            }
            EnvKind::SmdpFile => {
                let path = resolve(base_dir, require_ref(&self.path, "path", kind)?);
                Ok(BuiltEnvironment { smdp: Smdp::from_json_file(&path)?, grid: None })
            }
        }
    }

    fn check_fields(&self) -> Result<()> {
        let present: [(&str, bool); 10] = [
            ("width", self.width.is_some()),
            ("height", self.height.is_some()),
            ("horizon", self.horizon.is_some()),
            ("slip", self.slip.is_some()),
            ("start", self.start.is_some()),
            ("corridor_length", self.corridor_length.is_some()),
            ("room_size", self.room_size.is_some()),
            ("num_states", self.num_states.is_some()),
            ("epsilons", self.epsilons.is_some()),
            ("path", self.path.is_some()),
        ];
        let allowed: &[&str] = match self.kind {
            EnvKind::Grid => &["width", "height", "horizon", "slip", "start"],
            EnvKind::TwoRooms => &["corridor_length", "room_size", "horizon"],
            EnvKind::EpsilonBandit => &["num_states", "epsilons"],
            EnvKind::SmdpFile => &["path"],
        };
        reject_foreign(&present, allowed, "environment type", self.kind.name())
    }
}

/// Reward families; wire names match [`Reward::kind_name`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKindName {
    /// Density mass of the union of sensed square patches.
    WeightedCoverage,
    /// Quota-capped distinct-item counting over groups.
    ItemCollection,
    /// GP mutual information of the visited observation set.
    GpMutualInformation,
    /// Additive per-state rewards.
    Modular,
    /// Additive surrogate of an `inner` reward via its singleton values.
    ModularizedWrapper,
}

impl RewardKindName {
    fn name(self) -> &'static str {
        match self {
            RewardKindName::WeightedCoverage => "weighted_coverage",
            RewardKindName::ItemCollection => "item_collection",
            RewardKindName::GpMutualInformation => "gp_mutual_information",
            RewardKindName::Modular => "modular",
            RewardKindName::ModularizedWrapper => "modularized_wrapper",
        }
    }
}

/// Procedural density fields for coverage rewards.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DensityConfig {
    /// Every cell equals `value`.
    Constant {
        /// Cell weight (≥ 0).
        value: f64,
    },
    /// Sum of isotropic Gaussian bumps over a constant floor.
    MixtureOfGaussians {
        /// The bumps.
        components: Vec<GaussianBump>,
        /// Additive floor (default 0).
        #[serde(default)]
        floor: f64,
    },
    /// `exp` of a seeded zero-mean GP draw with an RBF kernel.
    GpSample {
        /// RBF lengthscale.
        lengthscale: f64,
        /// Signal variance.
        signal_variance: f64,
        /// Draw seed (default 0); fixed so reruns see the same field.
        #[serde(default)]
        seed: u64,
    },
}

/// One Gaussian bump: `weight · exp(−‖(row,col) − mean‖² / 2σ²)`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBump {
    /// Center as `[row, col]`.
    pub mean: (f64, f64),
    /// Width σ (> 0).
    pub sigma: f64,
    /// Peak weight (≥ 0).
    pub weight: f64,
}

/// What a reward block may consult while building: the environment's state
/// count, its grid geometry (if any), and the config file's directory.
#[derive(Debug, Clone)]
pub struct RewardContext<'a> {
    /// `|V|` of the built environment.
    pub num_states: usize,
    /// `(width, height)` when the environment is grid-shaped.
    pub grid: Option<(usize, usize)>,
    /// Anchor for relative paths.
    pub base_dir: &'a Path,
}

/// Reward block: a `kind` discriminator plus the union of per-kind fields.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    /// Reward family.
    pub kind: RewardKindName,
    /// Coverage: CSV file of cell densities (`height` rows × `width` columns).
    pub density_file: Option<PathBuf>,
    /// Coverage: procedural density (alternative to `density_file`).
    pub density: Option<DensityConfig>,
    /// Coverage: Chebyshev radius of the sensed patch.
    pub footprint_radius: Option<usize>,
    /// Items: pairwise-disjoint state groups.
    pub groups: Option<Vec<Vec<usize>>>,
    /// Items: per-group quotas.
    pub quotas: Option<Vec<usize>>,
    /// GP: RBF lengthscale (default 3).
    pub lengthscale: Option<f64>,
    /// GP: signal variance (default 1).
    pub signal_variance: Option<f64>,
    /// GP: observation noise variance (default 0.1).
    pub noise_variance: Option<f64>,
    /// GP: explicit observation point per state; defaults to grid cell
    /// centers when the environment is a grid.
    pub points: Option<Vec<[f64; 2]>>,
    /// Modular: per-state reward vector.
    pub state_reward: Option<Vec<f64>>,
    /// Modular: step discount in (0, 1] (default 1).
    pub discount: Option<f64>,
    /// Wrapper: the reward to modularize.
    pub inner: Option<Box<RewardConfig>>,
}

impl RewardConfig {
    /// Builds the reward, rejecting fields foreign to `kind` and checking
    /// that its ground set matches the environment's state count.
    pub fn build(&self, ctx: &RewardContext<'_>) -> Result<Reward> {
        self.check_fields()?;
        let kind = self.kind.name();
        let reward = match self.kind {
            RewardKindName::WeightedCoverage => {
                let (width, height) = ctx.grid.ok_or_else(|| {
                    Error::Config(
                        "weighted_coverage needs a grid-shaped environment".into(),
                    )
                })?;
                let source = match (&self.density_file, &self.density) {
                    (Some(file), None) => DensitySource::CsvFile(resolve(ctx.base_dir, file)),
                    (None, Some(config)) => config.to_source(),
                    (None, None) => {
                        return Err(Error::Config(
                            "weighted_coverage requires `density_file` or `density`".into(),
                        ))
                    }
                    (Some(_), Some(_)) => {
                        return Err(Error::Config(
                            "give either `density_file` or `density`, not both".into(),
                        ))
                    }
                };
                let seed = match &self.density {
                    Some(DensityConfig::GpSample { seed, .. }) => *seed,
                    _ => 0,
                };
                Reward::WeightedCoverage(CoverageParams {
                    grid_width: width,
                    grid_height: height,
                    density: build_density(&source, width, height, seed)?,
                    footprint_radius: require(&self.footprint_radius, "footprint_radius", kind)?,
                })
            }
            RewardKindName::ItemCollection => Reward::ItemCollection(ItemCollectionParams {
                num_states: ctx.num_states,
                groups: require_ref(&self.groups, "groups", kind)?.clone(),
                quotas: require_ref(&self.quotas, "quotas", kind)?.clone(),
            }),
            RewardKindName::GpMutualInformation => {
                let points = match &self.points {
                    Some(points) => points.clone(),
                    None => {
                        let (width, height) = ctx.grid.ok_or_else(|| {
                            Error::Config(
                                "gp_mutual_information needs explicit `points` when the \
                                 environment is not a grid"
                                    .into(),
                            )
                        })?;
                        grid_points(width, height)
                    }
                };
                Reward::GpMutualInformation(crate::gp::GpParams {
                    points,
                    lengthscale: self.lengthscale.unwrap_or(3.0),
                    signal_variance: self.signal_variance.unwrap_or(1.0),
                    noise_variance: self.noise_variance.unwrap_or(0.1),
                })
            }
            RewardKindName::Modular => Reward::Modular(ModularParams {
                state_reward: require_ref(&self.state_reward, "state_reward", kind)?.clone(),
                discount: self.discount.unwrap_or(1.0),
            }),
            RewardKindName::ModularizedWrapper => {
                let inner = require_ref(&self.inner, "inner", kind)?;
                inner.build(ctx)?.modularize()?
            }
        };
        reward.validate()?;
        if reward.num_states() != ctx.num_states {
            return Err(Error::Config(format!(
                "reward is defined over {} states but the environment has {}",
                reward.num_states(),
                ctx.num_states
            )));
        }
        Ok(reward)
    }

    fn check_fields(&self) -> Result<()> {
        let present: [(&str, bool); 12] = [
            ("density_file", self.density_file.is_some()),
            ("density", self.density.is_some()),
            ("footprint_radius", self.footprint_radius.is_some()),
            ("groups", self.groups.is_some()),
            ("quotas", self.quotas.is_some()),
            ("lengthscale", self.lengthscale.is_some()),
            ("signal_variance", self.signal_variance.is_some()),
            ("noise_variance", self.noise_variance.is_some()),
            ("points", self.points.is_some()),
            ("state_reward", self.state_reward.is_some()),
            ("discount", self.discount.is_some()),
            ("inner", self.inner.is_some()),
        ];
        let allowed: &[&str] = match self.kind {
            RewardKindName::WeightedCoverage => {
                &["density_file", "density", "footprint_radius"]
            }
            RewardKindName::ItemCollection => &["groups", "quotas"],
            RewardKindName::GpMutualInformation => {
                &["lengthscale", "signal_variance", "noise_variance", "points"]
            }
            RewardKindName::Modular => &["state_reward", "discount"],
            RewardKindName::ModularizedWrapper => &["inner"],
        };
        reject_foreign(&present, allowed, "reward kind", self.kind.name())
    }
}

impl DensityConfig {
    fn to_source(&self) -> DensitySource {
        match self {
            DensityConfig::Constant { value } => DensitySource::Constant(*value),
            DensityConfig::MixtureOfGaussians { components, floor } => {
                DensitySource::MixtureOfGaussians {
                    components: components
                        .iter()
                        .map(|b| GaussianComponent {
                            mean: b.mean,
                            sigma: b.sigma,
                            weight: b.weight,
                        })
                        .collect(),
                    floor: *floor,
                }
            }
            DensityConfig::GpSample { lengthscale, signal_variance, .. } => {
                DensitySource::GpSample {
                    lengthscale: *lengthscale,
                    signal_variance: *signal_variance,
                }
            }
        }
    }
}

/// Observation point for each grid cell `v = row·width + col`: `[col, row]`.
fn grid_points(width: usize, height: usize) -> Vec<[f64; 2]> {
    (0..width * height)
        .map(|v| [(v % width) as f64, (v / width) as f64])
        .collect()
}

/// Policy families the CLI can build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKindName {
    /// One logit table row per (step, state).
    Tabular,
    /// MLP over one-hot state plus normalized time.
    Mlp,
    /// MLP over a sliding window of recent states plus normalized time.
    HistoryMlp,
}

impl PolicyKindName {
    fn name(self) -> &'static str {
        match self {
            PolicyKindName::Tabular => "tabular",
            PolicyKindName::Mlp => "mlp",
            PolicyKindName::HistoryMlp => "history_mlp",
        }
    }
}

/// Policy block.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    /// Policy family.
    pub kind: PolicyKindName,
    /// MLP hidden width (default 64); both hidden layers share it.
    pub hidden: Option<usize>,
    /// History window length `k` (default: the horizon, i.e. full history).
    pub window: Option<usize>,
}

impl PolicyConfig {
    /// Builds a freshly initialized policy; weights draw from the seed's
    /// dedicated init stream, so equal seeds give bit-equal policies.
    pub fn make_policy(&self, smdp: &Smdp, seed: u64) -> Result<Policy> {
        self.check_fields()?;
        let hidden = self.hidden.unwrap_or(DEFAULT_HIDDEN);
        if matches!(self.kind, PolicyKindName::Mlp | PolicyKindName::HistoryMlp) && hidden == 0 {
            return Err(Error::Config("policy hidden width must be at least 1".into()));
        }
        let mut rng = stream(seed, StreamTag::Init, 0, 0);
        let arch = MlpArch { hidden };
        Ok(match self.kind {
            PolicyKindName::Tabular => {
                Policy::new_tabular(smdp.num_states(), smdp.num_actions(), smdp.horizon())
            }
            PolicyKindName::Mlp => Policy::new_mlp(
                smdp.num_states(),
                smdp.num_actions(),
                smdp.horizon(),
                arch,
                &mut rng,
            ),
            PolicyKindName::HistoryMlp => {
                let window = self.window.unwrap_or(smdp.horizon()).max(1);
                Policy::new_history_mlp(
                    smdp.num_states(),
                    smdp.num_actions(),
                    smdp.horizon(),
                    window,
                    arch,
                    &mut rng,
                )
            }
        })
    }

    /// Applies a `--policy` flag (`tabular`, `mlp`, `history`, `history:k`),
    /// keeping the configured hidden width.
    pub fn with_flag(&self, flag: &str) -> Result<PolicyConfig> {
        let (kind, window) = parse_policy_flag(flag)?;
        Ok(PolicyConfig { kind, hidden: self.hidden, window })
    }

    fn check_fields(&self) -> Result<()> {
        let present: [(&str, bool); 2] =
            [("hidden", self.hidden.is_some()), ("window", self.window.is_some())];
        let allowed: &[&str] = match self.kind {
            PolicyKindName::Tabular => &[],
            PolicyKindName::Mlp => &["hidden"],
            PolicyKindName::HistoryMlp => &["hidden", "window"],
        };
        reject_foreign(&present, allowed, "policy kind", self.kind.name())
    }
}

/// Parses a `--policy` flag into a family and optional window.
pub fn parse_policy_flag(flag: &str) -> Result<(PolicyKindName, Option<usize>)> {
    match flag {
        "tabular" => return Ok((PolicyKindName::Tabular, None)),
        "mlp" => return Ok((PolicyKindName::Mlp, None)),
        "history" => return Ok((PolicyKindName::HistoryMlp, None)),
        _ => {}
    }
    if let Some(rest) = flag.strip_prefix("history:") {
        let window: usize = rest.parse().map_err(|_| {
            Error::Input(format!("bad history window `{rest}` in --policy {flag}"))
        })?;
        if window == 0 {
            return Err(Error::Input("history window must be at least 1".into()));
        }
        return Ok((PolicyKindName::HistoryMlp, Some(window)));
    }
    Err(Error::Input(format!(
        "unknown policy `{flag}`; expected tabular, mlp, or history:k"
    )))
}

/// Parses an `--estimator` flag.
pub fn parse_estimator_flag(flag: &str) -> Result<EstimatorKind> {
    match flag {
        "subpo" => Ok(EstimatorKind::Subpo),
        "modpo" => Ok(EstimatorKind::Modpo),
        _ => Err(Error::Input(format!(
            "unknown estimator `{flag}`; expected subpo or modpo"
        ))),
    }
}

/// Train block: [`TrainConfig`] minus the seed, with defaults.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainBlock {
    /// Number of epochs.
    pub epochs: usize,
    /// Rollouts per epoch.
    pub batch_size: usize,
    /// Step size (default 1e-3).
    pub learning_rate: Option<f64>,
    /// `sgd` or `adam` (default adam).
    pub optimizer: Option<OptimizerKind>,
    /// Entropy bonus coefficient (default 0).
    pub entropy_coeff: Option<f64>,
    /// `subpo` or `modpo` (default subpo).
    pub estimator: Option<EstimatorKind>,
    /// Baseline mode (default EMA with β = 0.9).
    pub baseline: Option<BaselineKind>,
}

impl TrainBlock {
    /// Fills defaults and attaches the run seed.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate.unwrap_or(1e-3),
            optimizer: self.optimizer.unwrap_or(OptimizerKind::Adam),
            entropy_coeff: self.entropy_coeff.unwrap_or(0.0),
            estimator: self.estimator.unwrap_or(EstimatorKind::Subpo),
            baseline: self.baseline.unwrap_or(BaselineKind::Ema { beta: 0.9 }),
            seed,
        }
    }
}

fn require<T: Copy>(field: &Option<T>, name: &str, kind: &str) -> Result<T> {
    field.ok_or_else(|| Error::Config(format!("`{kind}` requires field `{name}`")))
}

fn require_ref<'a, T>(field: &'a Option<T>, name: &str, kind: &str) -> Result<&'a T> {
    field
        .as_ref()
        .ok_or_else(|| Error::Config(format!("`{kind}` requires field `{name}`")))
}

fn reject_foreign(
    present: &[(&str, bool)],
    allowed: &[&str],
    what: &str,
    kind: &str,
) -> Result<()> {
    for (name, is_present) in present {
        if *is_present && !allowed.contains(name) {
            return Err(Error::Config(format!(
                "field `{name}` does not apply to {what} `{kind}`"
            )));
        }
    }
    Ok(())
}

fn resolve(base_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base_dir.join(path)
    }
}
