//! Bandwidth selection for heat-kernel graph Laplacians by geometric
//! self-consistency.
//!
//! The Laplace-Beltrami operator determines the Riemannian metric of a
//! manifold. A graph Laplacian built at bandwidth ε therefore implies a
//! metric at every sample point, and for data lying on a submanifold of
//! Euclidean space that metric should be the identity in local orthonormal
//! tangent coordinates. The bandwidth whose Laplacian comes closest to that
//! identity, averaged over a subsample of points, is the selected ε̂.
//!
//! Pipeline:
//!
//! ```text
//! PointCloud ──pairwise_sq_dists──▶ heat_kernel(ε) ──▶ renormalized_laplacian
//!      │                                 │                      │
//!      │                    row i of W   ▼                      ▼
//!      └──────────────────────▶ tangent_projection ──▶ riemannian_metric
//!                                                              │
//!                              ||H − I||² averaged over N′ ◀───┘
//!                                        │
//!                       argmin over a log grid ──▶ ε̂
//! ```
//!
//! Comparison methods ([`baselines`]) and the Laplacian Eigenmaps smoothing
//! harness ([`embedding`]) are included for evaluation.

// `!(x > 0.0)` is the idiom used to reject NaN together with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod dataset;
pub mod distortion;
pub mod embedding;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod tangent;

mod serde_nan;

pub use baselines::{
    clmr_range, eigengap_range, multiscale_svd, reconstruction_error, select_bandwidth_rec,
    ClmrRange, RecCurve, SingularValueProfile,
};
pub use dataset::{
    embed_with_noise, generate_dome, generate_hourglass, generate_plane, load_csv, save_csv,
    subsample, NoiseSpec, PointCloud,
};
pub use distortion::{
    compute_distortion, select_bandwidth, DistortionCurve, DistortionOptions, DistortionResult,
    NormKind,
};
pub use embedding::{
    laplacian_eigenmaps, procrustes_align, smoothing_delta, Embedding, ProcrustesFit,
    SmoothingCurve,
};
pub use error::{GeoscaleError, Result};
pub use kernel::{
    epsilon_max, epsilon_min, heat_kernel, log_grid, pairwise_sq_dists, renormalized_laplacian,
    EpsilonGrid, GraphLaplacian, WeightMatrix,
};
pub use tangent::{
    riemannian_metric, tangent_projection, weighted_recenter, MetricEstimate, MetricKind,
    TangentFrame,
};
