//! Environment builders: grid worlds, the two-rooms exploration map, the
//! state-independent ε-bandit process, density fields, and item-group
//! placement.
//!
//! Grid cells use row-major ids `v = row·width + col`, matching the coverage
//! reward's geometry. Every grid has the same five actions:
//!
//! | id | action | effect          |
//! |----|--------|-----------------|
//! | 0  | up     | row − 1         |
//! | 1  | down   | row + 1         |
//! | 2  | left   | col − 1         |
//! | 3  | right  | col + 1         |
//! | 4  | stay   | no move         |
//!
//! Moves off the grid (or into a wall, for the two-rooms map) resolve to
//! "stay", keeping the action set uniform across states.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gp::{dense_cholesky, GpParams};
use crate::rng::{stream, StreamTag};
use crate::smdp::{point_mass, Smdp};

/// Number of grid actions (four moves plus stay).
pub const GRID_ACTIONS: usize = 5;

/// Initial-state rule for grid worlds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridStart {
    /// Always start at this cell id.
    Fixed(usize),
    /// Uniform over all cells.
    Uniform,
}

/// A rectangular grid world.
#[derive(Debug, Clone)]
pub struct GridSpec {
    /// Cells per row.
    pub width: usize,
    /// Rows.
    pub height: usize,
    /// Steps per episode.
    pub horizon: usize,
    /// Probability that a uniformly random action (possibly the intended
    /// one) executes instead of the chosen action; 0 = deterministic.
    pub slip: f64,
    /// Starting rule.
    pub start: GridStart,
}

/// The state-independent process: action `a_j` jumps to state `v_j` with
/// probability `1 − ε_h` and to each other state with `ε_h / (|V|−1)`,
/// regardless of the current state.
#[derive(Debug, Clone)]
pub struct EpsilonBanditSpec {
    /// Number of states; also the number of actions.
    pub num_states: usize,
    /// One ε per step; the length sets the horizon.
    pub epsilons: Vec<f64>,
}

/// Builds a grid-world process: `width·height` states, five actions,
/// optional slip noise mixed uniformly over the action set.
pub fn build_grid(spec: &GridSpec) -> Result<Smdp> {
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::Config("grid must have positive width and height".into()));
    }
    if !(0.0..=1.0).contains(&spec.slip) {
        return Err(Error::Config(format!("slip probability {} not in [0,1]", spec.slip)));
    }
    let n = spec.width * spec.height;
    let open = vec![true; n];
    let table = grid_table(spec.width, spec.height, spec.slip, &open);
    let initial = match spec.start {
        GridStart::Fixed(v) => {
            if v >= n {
                return Err(Error::Config(format!("start cell {v} out of range for {n} cells")));
            }
            point_mass(n, v)
        }
        GridStart::Uniform => vec![1.0 / n as f64; n],
    };
    Smdp::new_stationary(n, GRID_ACTIONS, spec.horizon, initial, table)
}

/// Transition table over a masked grid: blocked or off-grid targets resolve
/// to "stay"; slip mixes the intended move with a uniform action choice.
fn grid_table(width: usize, height: usize, slip: f64, open: &[bool]) -> Vec<f64> {
    let n = width * height;
    let mut table = vec![0.0; n * GRID_ACTIONS * n];
    for v in 0..n {
        if !open[v] {
            // Walls are absorbing; they are unreachable anyway.
            for a in 0..GRID_ACTIONS {
                table[(v * GRID_ACTIONS + a) * n + v] = 1.0;
            }
            continue;
        }
        let moves: Vec<usize> =
            (0..GRID_ACTIONS).map(|a| grid_move(width, height, open, v, a)).collect();
        for a in 0..GRID_ACTIONS {
            let row = &mut table[(v * GRID_ACTIONS + a) * n..(v * GRID_ACTIONS + a + 1) * n];
            row[moves[a]] += 1.0 - slip;
            for &m in &moves {
                row[m] += slip / GRID_ACTIONS as f64;
            }
        }
    }
    table
}

/// Successor of `v` under action `a` on a masked grid; blocked moves stay.
fn grid_move(width: usize, height: usize, open: &[bool], v: usize, a: usize) -> usize {
    let (row, col) = (v / width, v % width);
    let target = match a {
        0 => row.checked_sub(1).map(|r| (r, col)),
        1 => (row + 1 < height).then_some((row + 1, col)),
        2 => col.checked_sub(1).map(|c| (row, c)),
        3 => (col + 1 < width).then_some((row, col + 1)),
        4 => Some((row, col)),
        _ => unreachable!("grid has {GRID_ACTIONS} actions"),
    };
    match target {
        Some((r, c)) if open[r * width + c] => r * width + c,
        _ => v,
    }
}

/// Two `room_size × room_size` rooms joined by a single-cell-high corridor
/// of `corridor_length` cells at the rooms' middle row; every other cell
/// between the rooms is a wall. Deterministic dynamics; the agent starts at
/// the corridor's middle cell.
///
/// The returned process keeps the full bounding grid as its state space
/// (so grid-based rewards apply unchanged); wall cells are unreachable.
pub fn build_two_rooms(corridor_length: usize, room_size: usize, horizon: usize) -> Result<Smdp> {
    if room_size == 0 || corridor_length == 0 {
        return Err(Error::Config("rooms and corridor must be non-empty".into()));
    }
    let width = 2 * room_size + corridor_length;
    let height = room_size;
    let n = width * height;
    let mid_row = height / 2;
    let mut open = vec![false; n];
    for row in 0..height {
        for col in 0..width {
            let in_left = col < room_size;
            let in_right = col >= room_size + corridor_length;
            let in_corridor = row == mid_row && !in_left && !in_right;
            open[row * width + col] = in_left || in_right || in_corridor;
        }
    }
    let start = mid_row * width + room_size + corridor_length / 2;
    let table = grid_table(width, height, 0.0, &open);
    Smdp::new_stationary(n, GRID_ACTIONS, horizon, point_mass(n, start), table)
}

/// Grid dimensions of the two-rooms map (for pairing with a density field).
pub fn two_rooms_dims(corridor_length: usize, room_size: usize) -> (usize, usize) {
    (2 * room_size + corridor_length, room_size)
}

/// Builds the ε-bandit process; uniform initial distribution.
///
/// The admissible range used here is `ε_h ∈ [0, (|V|−1)/|V|]` — the tighter
/// of the two bounds the analysis states — at whose upper end every row
/// degenerates to uniform. Beyond it, "choosing" a state would make it less
/// likely than the alternatives.
pub fn build_epsilon_bandit(spec: &EpsilonBanditSpec) -> Result<Smdp> {
    let n = spec.num_states;
    if n < 2 {
        return Err(Error::Config("bandit needs at least two states".into()));
    }
    let bound = (n - 1) as f64 / n as f64;
    for (h, &eps) in spec.epsilons.iter().enumerate() {
        if !(0.0..=bound + 1e-12).contains(&eps) {
            return Err(Error::Config(format!(
                "ε at step {h} is {eps}, outside [0, {bound}] for {n} states"
            )));
        }
    }
    let horizon = spec.epsilons.len();
    let mut tables = Vec::with_capacity(horizon);
    for &eps in &spec.epsilons {
        let off = eps / (n - 1) as f64;
        let mut table = vec![0.0; n * n * n];
        for v in 0..n {
            for a in 0..n {
                let row = &mut table[(v * n + a) * n..(v * n + a + 1) * n];
                for (j, p) in row.iter_mut().enumerate() {
                    *p = if j == a { 1.0 - eps } else { off };
                }
            }
        }
        tables.push(table);
    }
    Smdp::new_per_step(n, n, horizon, vec![1.0 / n as f64; n], tables)
}

/// How to produce a density field over a `width × height` grid.
#[derive(Debug, Clone)]
pub enum DensitySource {
    /// Every cell equals this value.
    Constant(f64),
    /// Read `height` rows of `width` comma-separated nonnegative floats.
    CsvFile(std::path::PathBuf),
    /// `floor + Σ_i weight_i · exp(−‖(row,col) − mean_i‖² / (2σ_i²))`.
    MixtureOfGaussians { components: Vec<GaussianComponent>, floor: f64 },
    /// `exp(z)` for one zero-mean GP draw `z` with an RBF kernel over the
    /// cell coordinates, sampled by Cholesky; seeded and reproducible.
    GpSample { lengthscale: f64, signal_variance: f64 },
}

/// One isotropic Gaussian bump, in (row, col) coordinates.
#[derive(Debug, Clone, Copy)]
pub struct GaussianComponent {
    /// Bump center.
    pub mean: (f64, f64),
    /// Bump width σ (> 0).
    pub sigma: f64,
    /// Peak weight (≥ 0).
    pub weight: f64,
}

/// Materializes a density field: `width·height` nonnegative finite values in
/// row-major order. The seed matters only for [`DensitySource::GpSample`].
pub fn build_density(
    source: &DensitySource,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if width == 0 || height == 0 {
        return Err(Error::Config("density grid must be non-empty".into()));
    }
    let n = width * height;
    let field = match source {
        DensitySource::Constant(value) => {
            if !value.is_finite() || *value < 0.0 {
                return Err(Error::Config(format!("constant density {value} invalid")));
            }
            vec![*value; n]
        }
        DensitySource::CsvFile(path) => read_density_csv(path, width, height)?,
        DensitySource::MixtureOfGaussians { components, floor } => {
            if !floor.is_finite() || *floor < 0.0 {
                return Err(Error::Config(format!("mixture floor {floor} invalid")));
            }
            for c in components {
                if c.sigma <= 0.0 || c.weight < 0.0 {
                    return Err(Error::Config(
                        "mixture components need σ > 0 and weight ≥ 0".into(),
                    ));
                }
            }
            let mut field = Vec::with_capacity(n);
            for row in 0..height {
                for col in 0..width {
                    let mut val = *floor;
                    for c in components {
                        let dr = row as f64 - c.mean.0;
                        let dc = col as f64 - c.mean.1;
                        val += c.weight
                            * (-(dr * dr + dc * dc) / (2.0 * c.sigma * c.sigma)).exp();
                    }
                    field.push(val);
                }
            }
            field
        }
        DensitySource::GpSample { lengthscale, signal_variance } => {
            let points: Vec<[f64; 2]> = (0..height)
                .flat_map(|row| (0..width).map(move |col| [row as f64, col as f64]))
                .collect();
            let params = GpParams {
                points,
                lengthscale: *lengthscale,
                signal_variance: *signal_variance,
                noise_variance: 1.0, // unused by the prior draw
            };
            params.validate()?;
            let mut cov = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    cov[i * n + j] = params.kernel(params.points[i], params.points[j]);
                }
            }
            dense_cholesky(n, &mut cov)?;
            let mut rng = stream(seed, StreamTag::EnvGen, 0, 0);
            let z: Vec<f64> =
                (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            // field = exp(L·z): lognormal marginals, hence strictly positive.
            (0..n)
                .map(|i| {
                    let mut s = 0.0;
                    for (j, zj) in z.iter().enumerate().take(i + 1) {
                        s += cov[i * n + j] * zj;
                    }
                    s.exp()
                })
                .collect()
        }
    };
    for &d in &field {
        if !d.is_finite() || d < 0.0 {
            return Err(Error::Config(format!("density value {d} is not a finite nonnegative number")));
        }
    }
    Ok(field)
}

fn read_density_csv(path: &Path, width: usize, height: usize) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Input(format!("cannot read density CSV {}: {e}", path.display())))?;
    let mut field = Vec::with_capacity(width * height);
    let mut rows = 0usize;
    for record in reader.records() {
        let record =
            record.map_err(|e| Error::Input(format!("malformed density CSV: {e}")))?;
        if record.len() != width {
            return Err(Error::Input(format!(
                "density CSV row {rows} has {} fields, expected {width}",
                record.len()
            )));
        }
        for cell in record.iter() {
            let value: f64 = cell.parse().map_err(|_| {
                Error::Input(format!("density CSV cell {cell:?} is not a number"))
            })?;
            field.push(value);
        }
        rows += 1;
    }
    if rows != height {
        return Err(Error::Input(format!(
            "density CSV has {rows} rows, expected {height}"
        )));
    }
    Ok(field)
}

/// Places disjoint item groups by seeded uniform sampling without
/// replacement over all cells except `excluded` (typically the start).
pub fn place_groups(
    num_states: usize,
    group_sizes: &[usize],
    excluded: &[usize],
    rng: &mut impl Rng,
) -> Result<Vec<Vec<usize>>> {
    let total: usize = group_sizes.iter().sum();
    let pool: Vec<usize> =
        (0..num_states).filter(|v| !excluded.contains(v)).collect();
    if total > pool.len() {
        return Err(Error::Config(format!(
            "cannot place {total} items in {} available cells",
            pool.len()
        )));
    }
    let picks = rand::seq::index::sample(rng, pool.len(), total);
    let mut chosen: Vec<usize> = picks.iter().map(|i| pool[i]).collect();
    let mut groups = Vec::with_capacity(group_sizes.len());
    for &size in group_sizes {
        let rest = chosen.split_off(size);
        groups.push(chosen);
        chosen = rest;
    }
    Ok(groups)
}
