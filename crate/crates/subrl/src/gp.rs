//! Gaussian-process machinery for the mutual-information reward.
//!
//! Observations at locations `x₁, …, x_n` with i.i.d. noise variance `σ_n²`
//! carry mutual information `I(y; f) = ½ log det(I + σ_n⁻² K)` about the
//! latent function `f`, where `K` is the RBF kernel matrix
//! `k(x, x') = σ_f² exp(−‖x − x'‖² / (2ℓ²))`.
//!
//! With `L` the Cholesky factor of `M = I + σ_n⁻² K`, the MI equals
//! `Σ_i ln L_ii`, and appending one observation extends `L` by a single row:
//! solve `L w = c` for the new column `c`, set the new diagonal to
//! `√(d − wᵀw)`, and the marginal gain is `ln` of that diagonal. Repeated
//! locations stay positive definite through the noise term, so duplicate
//! observations have positive (but diminishing) gains.

use crate::error::{Error, Result};

/// Jitter added to the diagonal once if a Cholesky pivot fails.
const JITTER: f64 = 1e-10;

/// Kernel hyperparameters plus the observation location of every state.
#[derive(Debug, Clone)]
pub struct GpParams {
    /// Observation location `x(v)` for each state id `v`.
    pub points: Vec<[f64; 2]>,
    /// RBF lengthscale `ℓ > 0`.
    pub lengthscale: f64,
    /// Signal variance `σ_f² > 0`.
    pub signal_variance: f64,
    /// Observation noise variance `σ_n² > 0`.
    pub noise_variance: f64,
}

impl GpParams {
    /// Validates hyperparameters.
    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::Config(format!("lengthscale must be positive, got {}", self.lengthscale)));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::Config(format!(
                "signal_variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::Config(format!(
                "noise_variance must be positive, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    /// RBF kernel between two locations.
    pub fn kernel(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        self.signal_variance * (-d2 / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }

    fn kernel_by_id(&self, i: usize, j: usize) -> f64 {
        self.kernel(self.points[i], self.points[j])
    }
}

/// Incremental Cholesky state over the chosen observations.
///
/// Holds the ordered point ids, the lower-triangular factor `L` of
/// `I + σ_n⁻² K` in packed row-major form, and the running MI
/// `Σ_i ln L_ii`.
#[derive(Debug, Clone, Default)]
pub struct CholState {
    /// Point ids in inclusion order (duplicates allowed).
    chosen: Vec<usize>,
    /// Packed lower triangle: row `i` occupies `i(i+1)/2 .. i(i+1)/2+i+1`.
    l: Vec<f64>,
    /// Running mutual information.
    mi: f64,
}

impl CholState {
    /// Empty state: no observations, MI = 0.
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of observations included so far.
    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    /// True before any observation is included.
    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    /// Running mutual information `Σ_i ln L_ii`.
    pub fn mi(&self) -> f64 {
        self.mi
    }

    /// The observation (point id) sequence.
    pub fn chosen(&self) -> &[usize] {
        &self.chosen
    }

    fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.l[start..start + i + 1]
    }
}

/// Mutual information of an ordered observation list, from scratch.
///
/// Builds the full Cholesky factor of `I + σ_n⁻² K` over `subset` (point
/// ids, duplicates allowed) and returns `Σ ln L_ii = ½ log det(I + σ_n⁻²K)`.
/// The operation sequence is identical to pushing the points one by one
/// through [`mi_gain`], so both paths agree bit-for-bit.
pub fn mutual_information(params: &GpParams, subset: &[usize]) -> Result<f64> {
    let mut state = CholState::new();
    let mut total = 0.0;
    for &v in subset {
        total += mi_gain(params, &mut state, v)?;
    }
    Ok(total)
}

/// Marginal MI gain of appending observation `v`, via one new Cholesky row.
///
/// Returns the gain `MI(S ∪ {v}) − MI(S)` and advances `state` to represent
/// `S ∪ {v}`. Fails with a numerical error if the extended matrix is not
/// positive definite even after one shot of diagonal jitter.
pub fn mi_gain(params: &GpParams, state: &mut CholState, v: usize) -> Result<f64> {
    if v >= params.points.len() {
        return Err(Error::Input(format!(
            "point id {v} out of range for {} locations",
            params.points.len()
        )));
    }
    let inv_noise = 1.0 / params.noise_variance;
    let n = state.chosen.len();
    // New column of M = I + σ_n⁻²K against the existing rows, then the
    // forward substitution L w = c.
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let c_i = inv_noise * params.kernel_by_id(state.chosen[i], v);
        let row = state.row(i);
        let mut s = c_i;
        for (j, wj) in w.iter().enumerate() {
            s -= row[j] * wj;
        }
        w.push(s / row[i]);
    }
    let d = 1.0 + inv_noise * params.kernel_by_id(v, v);
    let mut pivot = d - w.iter().map(|x| x * x).sum::<f64>();
    if pivot <= 0.0 {
        pivot += JITTER;
        if pivot <= 0.0 {
            return Err(Error::Numerical(format!(
                "Cholesky extension failed at observation {} (point id {v}): pivot {pivot:e} after jitter",
                n + 1
            )));
        }
    }
    let diag = pivot.sqrt();
    state.l.extend_from_slice(&w);
    state.l.push(diag);
    state.chosen.push(v);
    let gain = diag.ln();
    state.mi += gain;
    Ok(gain)
}

/// In-place dense Cholesky of a symmetric `n×n` matrix (row-major): replaces
/// the lower triangle with `L` such that `A = L Lᵀ`; the strict upper
/// triangle is zeroed. A fixed diagonal jitter of `1e-8 · max_diag` is added
/// up front so that large, nearly singular covariance matrices (dense grids
/// under a smooth kernel) factor deterministically.
pub fn dense_cholesky(n: usize, a: &mut [f64]) -> Result<()> {
    assert_eq!(a.len(), n * n);
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
    let jitter = 1e-8 * max_diag.max(1.0);
    for i in 0..n {
        a[i * n + i] += jitter;
    }
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Numerical(format!(
                        "covariance matrix is not positive definite at row {i} (pivot {s:e})"
                    )));
                }
                a[i * n + j] = s.sqrt();
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
        for j in i + 1..n {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}
