//! Heat-kernel weights, the renormalized graph Laplacian and the ε search
//! range.
//!
//! The Laplacian uses the density-removing (α = 1) renormalization:
//!
//! ```text
//! d_i  = Σ_j W_ij              W′_ij = W_ij / (d_i d_j)
//! d′_i = Σ_j W′_ij             P_ij  = W′_ij / d′_i
//! L    = (4 / ε²) (P − I)
//! ```
//!
//! For the kernel exp(−|x|²/ε²) the second moment gives
//! `(P − I) f ≈ (ε²/4) Δf`, so the 4/ε² factor makes `L` an estimate of the
//! Laplace-Beltrami operator itself rather than of a multiple of it.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PointCloud;
use crate::error::{GeoscaleError, Result};

/// Kernel values below this are stored as exact zeros.
pub const KERNEL_FLUSH: f64 = 1e-300;

/// Default threshold for the lower end of the ε range.
pub const DEFAULT_GAMMA: f64 = 1e-4;

/// Default number of grid points.
pub const DEFAULT_GRID_COUNT: usize = 20;

/// Symmetric matrix of squared Euclidean distances. The diagonal is zero and
/// entry (i, j) is bitwise equal to entry (j, i).
pub fn pairwise_sq_dists(cloud: &PointCloud) -> DMatrix<f64> {
    let (n, r) = (cloud.n(), cloud.ambient_dim());
    let x = cloud.row_major();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &x[i * r..(i + 1) * r];
            (0..n)
                .map(|j| {
                    let xj = &x[j * r..(j + 1) * r];
                    xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum()
                })
                .collect()
        })
        .collect();
    // symmetric, so row i is column i
    DMatrix::from_fn(n, n, |i, j| rows[j][i])
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(GeoscaleError::invalid(format!(
            "epsilon must be finite and > 0, got {epsilon}"
        )));
    }
    Ok(())
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() || m.nrows() < 2 {
        return Err(GeoscaleError::invalid(format!(
            "expected a square matrix with at least 2 rows, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Heat-kernel weights at one bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
    epsilon: f64,
}

impl WeightMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    /// Row i of W (equal to column i).
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.w.as_slice()[i * n..(i + 1) * n]
    }
}

/// `W_ij = exp(−‖x_i − x_j‖² / ε²)`.
pub fn heat_kernel(sq_dists: &DMatrix<f64>, epsilon: f64) -> Result<WeightMatrix> {
    check_epsilon(epsilon)?;
    check_square(sq_dists)?;
    let inv = 1.0 / (epsilon * epsilon);
    let w = sq_dists.map(|d| {
        let v = (-d * inv).exp();
        if v < KERNEL_FLUSH {
            0.0
        } else {
            v
        }
    });
    Ok(WeightMatrix { w, epsilon })
}

/// Graph Laplacian scaled to approximate the Laplace-Beltrami operator.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    l: DMatrix<f64>,
    epsilon: f64,
}

impl GraphLaplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.l[(i, j)]
    }
}

/// Renormalized kernel `W′` and its degrees `d′`.
pub(crate) struct Renormalized {
    pub w_prime: DMatrix<f64>,
    pub d_prime: DVector<f64>,
}

fn column_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.iter().sum::<f64>()))
}

pub(crate) fn renormalize(w: &WeightMatrix) -> Renormalized {
    // W is symmetric, so column sums are the row degrees.
    let d = column_sums(&w.w);
    let mut w_prime = w.w.clone();
    for (j, mut col) in w_prime.column_iter_mut().enumerate() {
        for (i, v) in col.iter_mut().enumerate() {
            *v /= d[i] * d[j];
        }
    }
    let d_prime = column_sums(&w_prime);
    Renormalized { w_prime, d_prime }
}

/// Builds `L = (4/ε²)(P − I)` from the renormalized, row-stochastic kernel.
pub fn renormalized_laplacian(w: &WeightMatrix) -> GraphLaplacian {
    let Renormalized { w_prime, d_prime } = renormalize(w);
    let scale = 4.0 / (w.epsilon * w.epsilon);
    let n = w_prime.nrows();
    let mut l = w_prime;
    let mut off_diag = vec![0.0; n];
    for (j, mut col) in l.column_iter_mut().enumerate() {
        for (i, v) in col.iter_mut().enumerate() {
            if i != j {
                let p = *v / d_prime[i];
                off_diag[i] += p;
                *v = scale * p;
            }
        }
    }
    // P_ii − 1 = −Σ_{j≠i} P_ij without the cancellation when P_ii ≈ 1.
    for (i, s) in off_diag.into_iter().enumerate() {
        l[(i, i)] = -scale * s;
    }
    GraphLaplacian {
        l,
        epsilon: w.epsilon,
    }
}

/// `sqrt(mean_{i<j} ‖x_i − x_j‖²)`, the upper end of the ε range.
pub fn epsilon_max(sq_dists: &DMatrix<f64>) -> Result<f64> {
    check_square(sq_dists)?;
    let n = sq_dists.nrows();
    let mut total = 0.0;
    for j in 0..n {
        for i in 0..j {
            total += sq_dists[(i, j)];
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok((total / pairs).sqrt())
}

/// `max_j Σ_{i≠j} W_ij(ε)`: how far the kernel is from the identity.
/// Coincident points are left out because they never decouple.
pub fn kernel_identity_gap(sq_dists: &DMatrix<f64>, epsilon: f64) -> f64 {
    identity_gap_over(sq_dists, epsilon, 0..sq_dists.ncols())
}

fn identity_gap_over(
    sq_dists: &DMatrix<f64>,
    epsilon: f64,
    columns: impl IntoIterator<Item = usize>,
) -> f64 {
    let inv = 1.0 / (epsilon * epsilon);
    columns
        .into_iter()
        .map(|j| {
            sq_dists
                .column(j)
                .iter()
                .filter(|&&d| d > 0.0)
                .map(|&d| (-d * inv).exp())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Smallest ε at which the kernel stops being numerically the identity:
/// `max_j Σ_{i≠j} W_ij(ε) ≥ γ`.
///
/// Found by bisection in log-ε until the statistic at the returned value
/// lies in `[γ, 1.01 γ]` (or the bracket collapses to 1e-12 relative width).
pub fn epsilon_min(sq_dists: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    check_square(sq_dists)?;
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(GeoscaleError::invalid(format!(
            "gamma must be > 0, got {gamma}"
        )));
    }
    let n = sq_dists.ncols();
    let mut nearest = vec![f64::INFINITY; n];
    let mut degree = vec![0usize; n];
    for j in 0..n {
        for &d in sq_dists.column(j).iter().filter(|&&d| d > 0.0) {
            nearest[j] = nearest[j].min(d);
            degree[j] += 1;
        }
    }
    let max_degree = degree.iter().copied().max().unwrap_or(0) as f64;
    if gamma >= max_degree {
        return Err(GeoscaleError::invalid(format!(
            "gamma {gamma} is unreachable: at most {max_degree} distinct neighbours per point"
        )));
    }
    let d_min = nearest.iter().copied().fold(f64::INFINITY, f64::min);

    // Upper bracket: the closest pair alone contributes exp(−d_min/ε²).
    let mut hi = if gamma < 1.0 {
        (d_min / (1.0 / gamma).ln()).sqrt() * (1.0 + 1e-9)
    } else {
        let mut e = d_min.sqrt();
        while kernel_identity_gap(sq_dists, e) < gamma {
            e *= 2.0;
        }
        e
    };
    // Lower bracket: every column sum is below max_degree · exp(−d_min/ε²) = γ.
    let log_ratio = (max_degree / gamma).ln();
    let mut lo = 0.99 * (d_min / log_ratio).sqrt();

    // Columns that can reach γ anywhere in [lo, hi].
    let reach = hi * hi * log_ratio;
    let candidates: Vec<usize> = (0..n).filter(|&j| nearest[j] <= reach).collect();
    let stat = |e: f64| identity_gap_over(sq_dists, e, candidates.iter().copied());
    while stat(hi) < gamma {
        hi *= 1.0 + 1e-6;
    }

    while stat(hi) > 1.01 * gamma && hi / lo - 1.0 > 1e-12 {
        let mid = (lo * hi).sqrt();
        if stat(mid) >= gamma {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Increasing sequence of candidate bandwidths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonGrid {
    values: Vec<f64>,
}

impl EpsilonGrid {
    /// Any strictly increasing sequence of positive values.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(GeoscaleError::invalid("epsilon grid is empty"));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(GeoscaleError::invalid(
                "epsilon grid values must be finite and > 0",
            ));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeoscaleError::invalid(
                "epsilon grid must be strictly increasing",
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eps_min(&self) -> f64 {
        self.values[0]
    }

    pub fn eps_max(&self) -> f64 {
        *self.values.last().expect("grid is never empty")
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_values(self.values.iter().map(|v| v * c).collect())
    }
}

/// `count` log-spaced values from `eps_min` to `eps_max`, both included.
pub fn log_grid(eps_min: f64, eps_max: f64, count: usize) -> Result<EpsilonGrid> {
    if !(eps_min > 0.0) || !(eps_max > eps_min) || !eps_max.is_finite() {
        return Err(GeoscaleError::invalid(format!(
            "log grid needs 0 < eps_min < eps_max, got [{eps_min}, {eps_max}]"
        )));
    }
    if count < 2 {
        return Err(GeoscaleError::invalid(format!(
            "log grid needs count >= 2, got {count}"
        )));
    }
    let ratio = eps_max / eps_min;
    let last = (count - 1) as f64;
    let mut values: Vec<f64> = (0..count)
        .map(|k| eps_min * ratio.powf(k as f64 / last))
        .collect();
    values[0] = eps_min;
    values[count - 1] = eps_max;
    EpsilonGrid::from_values(values)
}

/// The standard search range: `log_grid(ε_min(γ), ε_max, count)`.
pub fn default_grid(sq_dists: &DMatrix<f64>, gamma: f64, count: usize) -> Result<EpsilonGrid> {
    let lo = epsilon_min(sq_dists, gamma)?;
    let hi = epsilon_max(sq_dists)?;
    log_grid(lo, hi, count)
}
