//! Comparison methods: heat-kernel reconstruction error and multiscale
//! local SVD scale ranges.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{format_f64, PointCloud};
use crate::distortion::argmin_first;
use crate::error::{GeoscaleError, Result};
use crate::kernel::{heat_kernel, pairwise_sq_dists, EpsilonGrid};
use crate::tangent::local_covariance;

/// Relative tolerance for the finite-difference monotonicity tests in
/// [`clmr_range`].
pub const CLMR_SLOPE_TOL: f64 = 1e-3;

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(GeoscaleError::invalid(format!(
            "epsilon must be finite and > 0, got {epsilon}"
        )));
    }
    Ok(())
}

fn reconstruction_error_rows(
    x: &[f64],
    r: usize,
    sq: &nalgebra::DMatrix<f64>,
    epsilon: f64,
) -> f64 {
    let n = sq.nrows();
    let inv = 1.0 / (epsilon * epsilon);
    let per_point: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let col = sq.column(i);
            // Shift by the nearest neighbour so the weights never all underflow.
            let nearest = (0..n)
                .filter(|&j| j != i)
                .map(|j| col[j])
                .fold(f64::INFINITY, f64::min);
            let mut recon = vec![0.0; r];
            let mut total = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                let u = (-(col[j] - nearest) * inv).exp();
                total += u;
                for c in 0..r {
                    recon[c] += u * x[j * r + c];
                }
            }
            (0..r)
                .map(|c| {
                    let e = x[i * r + c] - recon[c] / total;
                    e * e
                })
                .sum()
        })
        .collect();
    per_point.iter().sum()
}

/// `R(ε) = Σ_i ‖x_i − Σ_{j≠i} w_ij x_j / Σ_{l≠i} w_il‖²` with heat-kernel
/// weights.
pub fn reconstruction_error(cloud: &PointCloud, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let sq = pairwise_sq_dists(cloud);
    Ok(reconstruction_error_rows(
        &cloud.row_major(),
        cloud.ambient_dim(),
        &sq,
        epsilon,
    ))
}

/// Reconstruction error over a grid and its argmin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecCurve {
    pub epsilons: Vec<f64>,
    pub values: Vec<f64>,
    pub eps_hat: f64,
}

impl RecCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,reconstruction_error\n");
        for (e, v) in self.epsilons.iter().zip(&self.values) {
            let _ = writeln!(out, "{},{}", format_f64(*e), format_f64(*v));
        }
        out
    }
}

/// Selects ε by minimizing the reconstruction error (smallest ε on ties).
pub fn select_bandwidth_rec(cloud: &PointCloud, grid: &EpsilonGrid) -> Result<RecCurve> {
    let sq = pairwise_sq_dists(cloud);
    let x = cloud.row_major();
    let r = cloud.ambient_dim();
    let values: Vec<f64> = grid
        .values()
        .iter()
        .map(|&e| reconstruction_error_rows(&x, r, &sq, e))
        .collect();
    let best = argmin_first(&values)
        .ok_or_else(|| GeoscaleError::Selection("reconstruction error is undefined".into()))?;
    Ok(RecCurve {
        epsilons: grid.values().to_vec(),
        eps_hat: grid.values()[best],
        values,
    })
}

/// Mean weighted-local singular values across scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularValueProfile {
    pub epsilons: Vec<f64>,
    /// `values[k][t]`: mean (k+1)-th singular value at grid value t.
    pub values: Vec<Vec<f64>>,
}

impl SingularValueProfile {
    pub fn n_values(&self) -> usize {
        self.values.len()
    }

    /// Singular values at grid index `t`, largest first.
    pub fn at(&self, t: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[t]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon");
        for k in 1..=self.values.len() {
            let _ = write!(out, ",sv{k}");
        }
        out.push('\n');
        for (t, e) in self.epsilons.iter().enumerate() {
            out.push_str(&format_f64(*e));
            for v in &self.values {
                out.push(',');
                out.push_str(&format_f64(v[t]));
            }
            out.push('\n');
        }
        out
    }
}

/// Local SVD of the heat-kernel weighted recentered matrix Z at every grid
/// value and evaluation point, averaged over points.
///
/// Singular values of Z carry a 1/Σw factor; they are multiplied by
/// Σw / sqrt(Σw²) so that scales are comparable across ε (for 0/1 weights
/// this is ordinary local PCA scaling).
pub fn multiscale_svd(
    cloud: &PointCloud,
    grid: &EpsilonGrid,
    n_values: usize,
    eval_indices: &[usize],
) -> Result<SingularValueProfile> {
    let (n, r) = (cloud.n(), cloud.ambient_dim());
    if n_values < 1 || n_values > r.min(n - 1) {
        return Err(GeoscaleError::invalid(format!(
            "number of singular values must be in 1..={}, got {n_values}",
            r.min(n - 1)
        )));
    }
    if eval_indices.is_empty() {
        return Err(GeoscaleError::invalid("no evaluation points"));
    }
    if let Some(&bad) = eval_indices.iter().find(|&&i| i >= n) {
        return Err(GeoscaleError::invalid(format!(
            "evaluation index {bad} out of range"
        )));
    }
    let sq = pairwise_sq_dists(cloud);
    let x = cloud.row_major();
    let mut values = vec![Vec::with_capacity(grid.count()); n_values];
    for &eps in grid.values() {
        let w = heat_kernel(&sq, eps)?;
        let per_point = eval_indices
            .par_iter()
            .map(|&i| {
                let cov = local_covariance(&x, r, w.row(i))?;
                let mut eig: Vec<f64> = cov.gram.symmetric_eigenvalues().iter().copied().collect();
                eig.sort_by(|a, b| b.total_cmp(a));
                let rescale = cov.weight_sum / cov.weight_sq_sum.sqrt();
                Ok(eig
                    .iter()
                    .take(n_values)
                    .map(|v| v.max(0.0).sqrt() * rescale)
                    .collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let m = per_point.len() as f64;
        for (k, series) in values.iter_mut().enumerate() {
            series.push(per_point.iter().map(|s| s[k]).sum::<f64>() / m);
        }
    }
    Ok(SingularValueProfile {
        epsilons: grid.values().to_vec(),
        values,
    })
}

/// Scale range reported by the multiscale-SVD heuristic. Endpoints that
/// could not be located are NaN with the matching `defined_*` flag false.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClmrRange {
    #[serde(with = "crate::serde_nan")]
    pub eps_lo: f64,
    #[serde(with = "crate::serde_nan")]
    pub eps_hi: f64,
    pub k: usize,
    pub defined_lo: bool,
    pub defined_hi: bool,
}

impl ClmrRange {
    pub fn contains(&self, eps: f64) -> bool {
        self.defined_lo && self.defined_hi && self.eps_lo <= eps && eps <= self.eps_hi
    }
}

fn stops_increasing(series: &[f64], t: usize) -> bool {
    series[t + 1] - series[t] <= CLMR_SLOPE_TOL * series[t].abs()
}

/// Scans the profile left to right.
///
/// * `eps_lo`: first grid value where λ_{K+1} stops increasing.
/// * `eps_hi`: first grid value at or after `eps_lo` where λ₁ stops
///   increasing, i.e. the local neighbourhood has stopped growing along the
///   leading direction.
///
/// Slopes are one-sided finite differences with relative tolerance
/// [`CLMR_SLOPE_TOL`].
pub fn clmr_range(profile: &SingularValueProfile, k: usize) -> Result<ClmrRange> {
    if k < 1 || profile.n_values() < k + 1 {
        return Err(GeoscaleError::invalid(format!(
            "CLMR with K = {k} needs at least K + 1 singular values, profile has {}",
            profile.n_values()
        )));
    }
    let steps = profile.epsilons.len().saturating_sub(1);
    let lo = (0..steps).find(|&t| stops_increasing(&profile.values[k], t));
    let start = lo.unwrap_or(0);
    let hi = (start..steps).find(|&t| stops_increasing(&profile.values[0], t));
    Ok(ClmrRange {
        eps_lo: lo.map_or(f64::NAN, |t| profile.epsilons[t]),
        eps_hi: hi.map_or(f64::NAN, |t| profile.epsilons[t]),
        k,
        defined_lo: lo.is_some(),
        defined_hi: hi.is_some(),
    })
}

/// 1-based index of the largest gap λ_k − λ_{k+1} at grid index `t`.
pub fn largest_gap_index(profile: &SingularValueProfile, t: usize) -> Option<usize> {
    let s = profile.at(t);
    let gaps: Vec<f64> = s.windows(2).map(|w| -(w[0] - w[1])).collect();
    argmin_first(&gaps).map(|k| k + 1)
}

/// Smallest and largest grid values at which the `d`-th eigengap is the
/// largest one, or `None` if it never is.
pub fn eigengap_range(profile: &SingularValueProfile, d: usize) -> Option<(f64, f64)> {
    let hits: Vec<f64> = (0..profile.epsilons.len())
        .filter(|&t| largest_gap_index(profile, t) == Some(d))
        .map(|t| profile.epsilons[t])
        .collect();
    Some((*hits.first()?, *hits.last()?))
}
