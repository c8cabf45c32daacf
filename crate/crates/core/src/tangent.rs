//! Weighted local PCA tangent planes and the Laplacian-implied metric.
//!
//! At point i the heat-kernel row `W_i,:` weights a local PCA; its top d′
//! right singular vectors span the estimated tangent plane and give every
//! sample a d′-dimensional coordinate `Y_j`. In those coordinates the dual
//! metric is read off the Laplacian:
//!
//! ```text
//! H_kl = ½ Σ_j L_ij (Y_jk − Y_ik)(Y_jl − Y_il)
//! ```
//!
//! which is ½ Δ[(y_k − y_k(p))(y_l − y_l(p))] at p = x_i, i.e. the inverse
//! of the Riemannian metric. For data on an isometrically embedded manifold
//! the target is the identity.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::PointCloud;
use crate::error::{GeoscaleError, Result};
use crate::kernel::GraphLaplacian;
use crate::linalg::{asymmetry, sorted_symmetric_eigen, symmetrize};

/// Largest condition number accepted when inverting a metric.
pub const MAX_METRIC_CONDITION: f64 = 1e12;

/// Which form of the metric is compared against the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// The dual metric H, estimated directly.
    #[default]
    Dual,
    /// The Riemannian metric G = H⁻¹.
    Inverse,
}

/// Weighted local PCA result at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFrame {
    /// r × d′, orthonormal columns in order of decreasing singular value.
    pub basis: DMatrix<f64>,
    /// Weighted mean x̄.
    pub center: DVector<f64>,
    /// N × d′ tangent coordinates `(X − 1x̄ᵀ) V`.
    pub projected: DMatrix<f64>,
    /// All singular values of the recentered design matrix, decreasing.
    pub singular_values: Vec<f64>,
    /// Singular value d′ equals singular value d′ + 1 to working precision,
    /// so the subspace is not uniquely determined.
    pub degenerate: bool,
}

impl TangentFrame {
    pub fn d_prime(&self) -> usize {
        self.basis.ncols()
    }
}

fn check_weights(weights: &[f64], n: usize) -> Result<f64> {
    if weights.len() != n {
        return Err(GeoscaleError::invalid(format!(
            "weight vector has length {}, expected {n}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(GeoscaleError::invalid(
            "weights must be finite and non-negative",
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(GeoscaleError::invalid("weights sum to zero"));
    }
    Ok(total)
}

/// `x̄ = Σ_j w_j x_j / Σ_j w_j` and `Z_j = w_j (x_j − x̄) / Σ_j w_j`.
pub fn weighted_recenter(
    cloud: &PointCloud,
    weights: &[f64],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let total = check_weights(weights, cloud.n())?;
    let x = cloud.points();
    let r = cloud.ambient_dim();
    let center = weighted_center(&cloud.row_major(), r, weights, total);
    let z = DMatrix::from_fn(cloud.n(), r, |j, c| {
        weights[j] * (x[(j, c)] - center[c]) / total
    });
    Ok((z, center))
}

fn weighted_center(x: &[f64], r: usize, weights: &[f64], total: f64) -> DVector<f64> {
    let mut center = DVector::zeros(r);
    for (j, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for c in 0..r {
            center[c] += w * x[j * r + c];
        }
    }
    center / total
}

/// Weighted local second-moment data at one point.
pub(crate) struct LocalCovariance {
    pub center: DVector<f64>,
    /// ZᵀZ, r × r.
    pub gram: DMatrix<f64>,
    pub weight_sum: f64,
    pub weight_sq_sum: f64,
}

/// Computes ZᵀZ without materializing Z. `x` is row-major N × r.
pub(crate) fn local_covariance(x: &[f64], r: usize, weights: &[f64]) -> Result<LocalCovariance> {
    let n = x.len() / r;
    let total = check_weights(weights, n)?;
    let center = weighted_center(x, r, weights, total);
    let mut upper = vec![0.0; r * r];
    let mut diff = vec![0.0; r];
    let mut weight_sq_sum = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let s = w / total;
        weight_sq_sum += w * w;
        for c in 0..r {
            diff[c] = s * (x[j * r + c] - center[c]);
        }
        for a in 0..r {
            let da = diff[a];
            for b in a..r {
                upper[a * r + b] += da * diff[b];
            }
        }
    }
    let gram = DMatrix::from_fn(r, r, |a, b| {
        if a <= b {
            upper[a * r + b]
        } else {
            upper[b * r + a]
        }
    });
    Ok(LocalCovariance {
        center,
        gram,
        weight_sum: total,
        weight_sq_sum,
    })
}

pub(crate) fn frame_from_rows(
    x: &[f64],
    r: usize,
    weights: &[f64],
    d_prime: usize,
) -> Result<TangentFrame> {
    let n = x.len() / r;
    if d_prime < 1 || d_prime > r.min(n - 1) {
        return Err(GeoscaleError::invalid(format!(
            "d_prime must be in 1..={}, got {d_prime}",
            r.min(n - 1)
        )));
    }
    let cov = local_covariance(x, r, weights)?;
    let eig = sorted_symmetric_eigen(&cov.gram);
    let degenerate = d_prime < r && eig.ties[d_prime - 1];
    let basis = eig.vectors.columns(0, d_prime).into_owned();
    let mut projected = DMatrix::zeros(n, d_prime);
    for j in 0..n {
        for k in 0..d_prime {
            let mut acc = 0.0;
            for c in 0..r {
                acc += (x[j * r + c] - cov.center[c]) * basis[(c, k)];
            }
            projected[(j, k)] = acc;
        }
    }
    Ok(TangentFrame {
        basis,
        center: cov.center,
        projected,
        singular_values: eig.values.iter().map(|v| v.max(0.0).sqrt()).collect(),
        degenerate,
    })
}

/// Weighted local PCA: the top-d′ right singular subspace of Z and the
/// coordinates of every point in it.
pub fn tangent_projection(
    cloud: &PointCloud,
    weights: &[f64],
    d_prime: usize,
) -> Result<TangentFrame> {
    let frame = frame_from_rows(&cloud.row_major(), cloud.ambient_dim(), weights, d_prime)?;
    if frame.degenerate {
        warn!(
            "tangent frame: singular values {d_prime} and {} coincide",
            d_prime + 1
        );
    }
    Ok(frame)
}

/// Metric at one sample point, in tangent coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricEstimate {
    /// d′ × d′ symmetric matrix: H when `kind` is dual, H⁻¹ otherwise.
    pub h: DMatrix<f64>,
    pub kind: MetricKind,
    pub point: usize,
}

impl MetricEstimate {
    /// Wraps a dual metric, inverting it when `kind` asks for the primal
    /// form. Inversion refuses singular, indefinite or badly conditioned
    /// matrices instead of regularizing them.
    pub fn from_dual(h: DMatrix<f64>, point: usize, kind: MetricKind) -> Result<Self> {
        if !h.is_square() || h.nrows() == 0 {
            return Err(GeoscaleError::invalid(
                "metric must be a non-empty square matrix",
            ));
        }
        let h = symmetrize(&h);
        let h = match kind {
            MetricKind::Dual => h,
            MetricKind::Inverse => invert_spd(&h, point)?,
        };
        Ok(Self { h, kind, point })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }
}

fn invert_spd(h: &DMatrix<f64>, point: usize) -> Result<DMatrix<f64>> {
    let eig = sorted_symmetric_eigen(h);
    let d = eig.values.len();
    let (top, bottom) = (eig.values[0], eig.values[d - 1]);
    let fail = |reason: String| GeoscaleError::NonInvertibleMetric { point, reason };
    if !(bottom > 0.0) {
        return Err(fail(format!(
            "smallest eigenvalue {bottom:e} is not positive"
        )));
    }
    let condition = top / bottom;
    if !(condition <= MAX_METRIC_CONDITION) {
        return Err(fail(format!(
            "condition number {condition:e} exceeds {MAX_METRIC_CONDITION:e}"
        )));
    }
    let inv_diag = DMatrix::from_diagonal(&eig.values.map(|v| 1.0 / v));
    Ok(symmetrize(
        &(&eig.vectors * inv_diag * eig.vectors.transpose()),
    ))
}

/// Raw (unsymmetrized) dual metric at point `i`.
pub(crate) fn dual_metric_raw(
    projected: &DMatrix<f64>,
    i: usize,
    lap: &GraphLaplacian,
) -> DMatrix<f64> {
    let (n, d) = projected.shape();
    let l = lap.matrix();
    let mut h = DMatrix::zeros(d, d);
    let mut diff = vec![0.0; d];
    for j in 0..n {
        let lij = l[(i, j)];
        if lij == 0.0 {
            continue;
        }
        for k in 0..d {
            diff[k] = projected[(j, k)] - projected[(i, k)];
        }
        for k in 0..d {
            let a = lij * diff[k];
            for m in 0..d {
                h[(k, m)] += a * diff[m];
            }
        }
    }
    h * 0.5
}

/// Dual metric (or its inverse) at sample `i` from the Laplacian and the
/// tangent coordinates of `frame`.
pub fn riemannian_metric(
    frame: &TangentFrame,
    i: usize,
    lap: &GraphLaplacian,
    kind: MetricKind,
) -> Result<MetricEstimate> {
    let n = frame.projected.nrows();
    if lap.n() != n {
        return Err(GeoscaleError::invalid(format!(
            "frame has {n} points but the Laplacian has {}",
            lap.n()
        )));
    }
    if i >= n {
        return Err(GeoscaleError::invalid(format!(
            "point index {i} out of range"
        )));
    }
    let h = dual_metric_raw(&frame.projected, i, lap);
    debug_assert!(asymmetry(&h) <= 1e-8 * h.amax().max(1.0));
    MetricEstimate::from_dual(h, i, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{heat_kernel, pairwise_sq_dists, renormalized_laplacian};

    fn line(values: &[f64]) -> PointCloud {
        PointCloud::from_rows(&values.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn uniform_weights_give_plain_mean() {
        let c = PointCloud::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 8.0]]).unwrap();
        let (_, center) = weighted_recenter(&c, &[1.0, 1.0, 1.0]).unwrap();
        assert!((center[0] - 2.0).abs() < 1e-15);
        assert!((center[1] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn concentrated_weight() {
        let c = PointCloud::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 8.0]]).unwrap();
        let (z, center) = weighted_recenter(&c, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(center.as_slice(), &[2.0, 3.0]);
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hand_evaluated_recentering() {
        let (z, center) = weighted_recenter(&line(&[0.0, 1.0, 2.0]), &[1.0, 2.0, 1.0]).unwrap();
        assert!((center[0] - 1.0).abs() < 1e-15);
        let expect = [-0.25, 0.0, 0.25];
        for (a, b) in z.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_weights_rejected() {
        assert!(weighted_recenter(&line(&[0.0, 1.0]), &[0.0, 0.0]).is_err());
        assert!(weighted_recenter(&line(&[0.0, 1.0]), &[1.0, -1.0]).is_err());
        assert!(weighted_recenter(&line(&[0.0, 1.0]), &[1.0]).is_err());
    }

    #[test]
    fn d_prime_bounds() {
        let c = PointCloud::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 8.0]]).unwrap();
        assert!(tangent_projection(&c, &[1.0; 3], 0).is_err());
        assert!(tangent_projection(&c, &[1.0; 3], 3).is_err());
        assert!(tangent_projection(&c, &[1.0; 3], 2).is_ok());
    }

    #[test]
    fn inverse_of_singular_metric_fails() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        let err = MetricEstimate::from_dual(h.clone(), 17, MetricKind::Inverse).unwrap_err();
        assert!(matches!(
            err,
            GeoscaleError::NonInvertibleMetric { point: 17, .. }
        ));
        assert!(MetricEstimate::from_dual(h, 17, MetricKind::Dual).is_ok());

        let indefinite = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        assert!(MetricEstimate::from_dual(indefinite, 0, MetricKind::Inverse).is_err());
        let ill = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-13]));
        assert!(MetricEstimate::from_dual(ill, 0, MetricKind::Inverse).is_err());
    }

    #[test]
    fn inverse_metric_inverts() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = MetricEstimate::from_dual(h.clone(), 0, MetricKind::Inverse).unwrap();
        assert!((&g.h * &h - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn metric_is_symmetric_on_curved_data() {
        let c = crate::dataset::generate_dome(300, 5).unwrap();
        let w = heat_kernel(&pairwise_sq_dists(&c), 0.3).unwrap();
        let l = renormalized_laplacian(&w);
        let frame = tangent_projection(&c, w.row(4), 2).unwrap();
        let raw = dual_metric_raw(&frame.projected, 4, &l);
        assert!(asymmetry(&raw) <= 1e-8 * raw.amax());
        let m = riemannian_metric(&frame, 4, &l, MetricKind::Dual).unwrap();
        assert_eq!(m.h, m.h.transpose());
    }
}
