//! Geometric-consistency distortion and the ε̂ = argmin D selector.
//!
//! For one ε the heat kernel and Laplacian are built once over all N points;
//! the metric is then estimated at each evaluation point and compared with
//! the identity in the spectral norm. D is the mean of the squared norms
//! (or of the plain norms, see [`NormKind`]) over the points where the
//! metric could be formed.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{format_f64, subsample_indices, PointCloud};
use crate::error::{GeoscaleError, Result};
use crate::kernel::{heat_kernel, pairwise_sq_dists, renormalized_laplacian, EpsilonGrid};
use crate::linalg::spectral_norm;
use crate::tangent::{dual_metric_raw, frame_from_rows, MetricEstimate, MetricKind};

/// Fraction of failed evaluation points above which a grid value is not
/// eligible for the argmin.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

/// Default evaluation subsample size.
pub const DEFAULT_N_PRIME: usize = 200;

/// How per-point deviations are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// Mean of ‖H − I‖².
    #[default]
    Squared,
    /// Mean of ‖H − I‖.
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistortionOptions {
    pub d_prime: usize,
    pub metric: MetricKind,
    pub norm: NormKind,
}

impl Default for DistortionOptions {
    fn default() -> Self {
        Self {
            d_prime: 1,
            metric: MetricKind::Dual,
            norm: NormKind::Squared,
        }
    }
}

impl DistortionOptions {
    pub fn with_d_prime(d_prime: usize) -> Self {
        Self {
            d_prime,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointDistortion {
    pub index: usize,
    /// ‖H − I‖ in the spectral norm (never squared).
    pub deviation: f64,
}

/// Distortion at one bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionResult {
    pub epsilon: f64,
    /// NaN (`null` in JSON) when every evaluation point failed.
    #[serde(with = "crate::serde_nan")]
    pub distortion: f64,
    pub per_point: Vec<PointDistortion>,
    pub failures: Vec<usize>,
    /// Evaluation points whose tangent frame had tied singular values at
    /// position d′, so the frame was fixed by the tie-break rule.
    pub n_degenerate: usize,
    pub reliable: bool,
}

impl DistortionResult {
    pub fn n_evaluated(&self) -> usize {
        self.per_point.len()
    }

    pub fn n_failed(&self) -> usize {
        self.failures.len()
    }

    /// Mean of ‖H − I‖ over the evaluated points.
    pub fn mean_deviation(&self) -> f64 {
        let n = self.per_point.len() as f64;
        self.per_point.iter().map(|p| p.deviation).sum::<f64>() / n
    }
}

/// Point coordinates and distances shared by every ε of a sweep.
pub(crate) struct Prepared {
    rows: Vec<f64>,
    r: usize,
    sq: DMatrix<f64>,
}

impl Prepared {
    pub fn new(cloud: &PointCloud) -> Self {
        Self {
            rows: cloud.row_major(),
            r: cloud.ambient_dim(),
            sq: pairwise_sq_dists(cloud),
        }
    }

    fn n(&self) -> usize {
        self.sq.nrows()
    }
}

fn check_request(n: usize, r: usize, eval: &[usize], opts: &DistortionOptions) -> Result<()> {
    if eval.is_empty() {
        return Err(GeoscaleError::invalid("no evaluation points"));
    }
    if let Some(&bad) = eval.iter().find(|&&i| i >= n) {
        return Err(GeoscaleError::invalid(format!(
            "evaluation index {bad} out of range"
        )));
    }
    if opts.d_prime < 1 || opts.d_prime > r.min(n - 1) {
        return Err(GeoscaleError::invalid(format!(
            "d_prime must be in 1..={}, got {}",
            r.min(n - 1),
            opts.d_prime
        )));
    }
    Ok(())
}

fn distortion_at(
    prep: &Prepared,
    epsilon: f64,
    eval: &[usize],
    opts: &DistortionOptions,
) -> Result<DistortionResult> {
    let w = heat_kernel(&prep.sq, epsilon)?;
    let lap = renormalized_laplacian(&w);
    let identity = DMatrix::<f64>::identity(opts.d_prime, opts.d_prime);

    let outcomes: Vec<(bool, Result<f64>)> = eval
        .par_iter()
        .map(|&i| {
            let frame = match frame_from_rows(&prep.rows, prep.r, w.row(i), opts.d_prime) {
                Ok(f) => f,
                Err(e) => return (false, Err(e)),
            };
            let h = dual_metric_raw(&frame.projected, i, &lap);
            let deviation = MetricEstimate::from_dual(h, i, opts.metric)
                .and_then(|metric| spectral_norm(&(metric.h - &identity)));
            (frame.degenerate, deviation)
        })
        .collect();

    let mut per_point = Vec::with_capacity(eval.len());
    let mut failures = Vec::new();
    let mut n_degenerate = 0;
    for (&index, (degenerate, outcome)) in eval.iter().zip(outcomes) {
        n_degenerate += usize::from(degenerate);
        match outcome {
            Ok(deviation) if deviation.is_finite() => {
                per_point.push(PointDistortion { index, deviation })
            }
            Ok(_) => failures.push(index),
            Err(GeoscaleError::NonInvertibleMetric { .. }) => failures.push(index),
            Err(e) => return Err(e),
        }
    }
    if per_point.is_empty() {
        return Err(GeoscaleError::DistortionUndefined {
            epsilon,
            evaluated: eval.len(),
        });
    }
    let total: f64 = per_point
        .iter()
        .map(|p| match opts.norm {
            NormKind::Squared => p.deviation * p.deviation,
            NormKind::Plain => p.deviation,
        })
        .sum();
    let distortion = total / per_point.len() as f64;
    let reliable = failures.len() as f64 <= MAX_FAILURE_FRACTION * eval.len() as f64;
    Ok(DistortionResult {
        epsilon,
        distortion,
        per_point,
        failures,
        n_degenerate,
        reliable,
    })
}

/// Distortion of the Laplacian at `epsilon`, evaluated at `eval_indices`
/// (all N points still enter the kernel, the Laplacian and the local PCA).
pub fn compute_distortion(
    cloud: &PointCloud,
    epsilon: f64,
    eval_indices: &[usize],
    opts: &DistortionOptions,
) -> Result<DistortionResult> {
    check_request(cloud.n(), cloud.ambient_dim(), eval_indices, opts)?;
    let result = distortion_at(&Prepared::new(cloud), epsilon, eval_indices, opts)?;
    if result.n_degenerate > 0 {
        log::warn!(
            "{} of {} tangent frames at epsilon {epsilon:e} have tied singular values at d' = {}",
            result.n_degenerate,
            eval_indices.len(),
            opts.d_prime
        );
    }
    Ok(result)
}

/// Index of the smallest non-NaN value; the first one wins ties.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] <= *v => {}
            _ => best = Some(k),
        }
    }
    best
}

/// Distortion over a grid and the selected bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionCurve {
    pub results: Vec<DistortionResult>,
    pub eps_hat: f64,
    pub d_prime: usize,
    pub n_prime: usize,
    pub seed: u64,
    pub metric: MetricKind,
    pub norm: NormKind,
}

impl DistortionCurve {
    pub fn epsilons(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.epsilon).collect()
    }

    pub fn distortions(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.distortion).collect()
    }

    /// Grid index of ε̂.
    pub fn argmin(&self) -> usize {
        self.results
            .iter()
            .position(|r| r.epsilon == self.eps_hat)
            .expect("eps_hat is a grid value")
    }

    pub fn selected(&self) -> &DistortionResult {
        &self.results[self.argmin()]
    }

    /// Columns: epsilon, distortion, n_evaluated, n_failed. Undefined
    /// distortions are written as `nan`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,distortion,n_evaluated,n_failed\n");
        for r in &self.results {
            let d = if r.distortion.is_nan() {
                "nan".to_string()
            } else {
                format_f64(r.distortion)
            };
            let _ = writeln!(
                out,
                "{},{},{},{}",
                format_f64(r.epsilon),
                d,
                r.n_evaluated(),
                r.n_failed()
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Evaluates the distortion at every grid value on one shared subsample
/// and returns the curve with ε̂ = argmin D (smallest ε on ties).
///
/// Grid values where every evaluation point fails, or where more than
/// [`MAX_FAILURE_FRACTION`] fail, are kept in the curve but not eligible.
pub fn select_bandwidth(
    cloud: &PointCloud,
    grid: &EpsilonGrid,
    n_prime: usize,
    seed: u64,
    opts: &DistortionOptions,
) -> Result<DistortionCurve> {
    let eval = subsample_indices(cloud.n(), n_prime, seed)?;
    check_request(cloud.n(), cloud.ambient_dim(), &eval, opts)?;
    let prep = Prepared::new(cloud);
    let results = grid
        .values()
        .par_iter()
        .map(|&eps| match distortion_at(&prep, eps, &eval, opts) {
            Ok(r) => Ok(r),
            Err(GeoscaleError::DistortionUndefined { .. }) => Ok(DistortionResult {
                epsilon: eps,
                distortion: f64::NAN,
                per_point: Vec::new(),
                failures: eval.clone(),
                n_degenerate: 0,
                reliable: false,
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    debug_assert_eq!(prep.n(), cloud.n());
    let tied: Vec<&DistortionResult> = results.iter().filter(|r| r.n_degenerate > 0).collect();
    if let (Some(first), Some(last)) = (tied.first(), tied.last()) {
        log::warn!(
            "tangent frames with tied singular values at d' = {} in {} grid values \
             (epsilon {:e} to {:e}); the tie-break rule fixed their orientation",
            opts.d_prime,
            tied.len(),
            first.epsilon,
            last.epsilon
        );
    }

    let eligible: Vec<f64> = results
        .iter()
        .map(|r| if r.reliable { r.distortion } else { f64::NAN })
        .collect();
    let best = argmin_first(&eligible).ok_or_else(|| {
        GeoscaleError::Selection(format!(
            "no grid value in [{}, {}] produced a reliable distortion",
            grid.eps_min(),
            grid.eps_max()
        ))
    })?;
    Ok(DistortionCurve {
        eps_hat: results[best].epsilon,
        results,
        d_prime: opts.d_prime,
        n_prime,
        seed,
        metric: opts.metric,
        norm: opts.norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmin_picks_minimum() {
        assert_eq!(argmin_first(&[3.0, 1.0, 2.0]), Some(1));
    }

    #[test]
    fn argmin_ties_take_first() {
        assert_eq!(argmin_first(&[2.0, 1.0, 1.0]), Some(1));
        assert_eq!(argmin_first(&[f64::NAN, 5.0, 5.0]), Some(1));
        assert_eq!(argmin_first(&[f64::NAN]), None);
    }

    fn result(eps: f64, devs: &[f64]) -> DistortionResult {
        let per_point: Vec<_> = devs
            .iter()
            .enumerate()
            .map(|(index, &deviation)| PointDistortion { index, deviation })
            .collect();
        DistortionResult {
            epsilon: eps,
            distortion: devs.iter().map(|d| d * d).sum::<f64>() / devs.len() as f64,
            per_point,
            failures: vec![],
            n_degenerate: 0,
            reliable: true,
        }
    }

    #[test]
    fn mean_of_squares() {
        assert_eq!(result(1.0, &[1.0, 0.0]).distortion, 0.5);
        assert_eq!(result(1.0, &[0.0, 0.0]).distortion, 0.0);
    }

    #[test]
    fn csv_and_json_shapes() {
        let mut undefined = result(3.0, &[1.0]);
        undefined.distortion = f64::NAN;
        undefined.per_point.clear();
        undefined.failures = vec![0];
        undefined.reliable = false;
        let curve = DistortionCurve {
            results: vec![result(1.0, &[1.0, 0.0]), result(2.0, &[0.5]), undefined],
            eps_hat: 2.0,
            d_prime: 1,
            n_prime: 2,
            seed: 0,
            metric: MetricKind::Dual,
            norm: NormKind::Squared,
        };
        let csv = curve.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "epsilon,distortion,n_evaluated,n_failed");
        assert_eq!(lines[1], "1,0.5,2,0");
        assert_eq!(lines[3], "3,nan,0,1");
        assert_eq!(curve.argmin(), 1);

        let json = curve.to_json().unwrap();
        let back: DistortionCurve = serde_json::from_str(&json).unwrap();
        assert!(back.results[2].distortion.is_nan());
        assert_eq!(back.results[..2], curve.results[..2]);
    }

    #[test]
    fn rejects_bad_requests() {
        let c = crate::dataset::generate_plane(50, 1).unwrap();
        let opts = DistortionOptions::with_d_prime(3);
        assert!(compute_distortion(&c, 0.2, &[0, 1], &opts).is_err());
        let opts = DistortionOptions::default();
        assert!(compute_distortion(&c, 0.2, &[], &opts).is_err());
        assert!(compute_distortion(&c, 0.2, &[50], &opts).is_err());
        assert!(compute_distortion(&c, 0.0, &[0], &opts).is_err());
    }
}
