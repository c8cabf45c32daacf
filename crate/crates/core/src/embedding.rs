//! Laplacian Eigenmaps, Procrustes alignment and the smoothing experiment.
//!
//! The smoothing experiment measures how well a bandwidth denoises: a noisy
//! cloud X and its clean counterpart X* are both embedded, the embeddings
//! are aligned by a similarity transform, and the RMS residual δ_{ε,ε*} is
//! minimized over the clean bandwidth ε*. Low δ_ε means the noisy
//! embedding at ε recovers the clean geometry.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{format_f64, PointCloud};
use crate::distortion::argmin_first;
use crate::error::{GeoscaleError, Result};
use crate::kernel::{heat_kernel, pairwise_sq_dists, renormalize, EpsilonGrid};
use crate::linalg::fix_column_signs;

/// Spectral coordinates of a cloud at one bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// N × m, unit-norm columns.
    pub coords: DMatrix<f64>,
    pub epsilon: f64,
    /// Eigenvalues of the random-walk matrix P for each column, decreasing.
    pub eigenvalues: Vec<f64>,
}

fn eigenmaps_from_sq(sq: &DMatrix<f64>, epsilon: f64, m: usize) -> Result<Embedding> {
    let n = sq.nrows();
    if m < 1 || m + 1 > n {
        return Err(GeoscaleError::invalid(format!(
            "embedding dimension must be in 1..={}, got {m}",
            n - 1
        )));
    }
    let w = heat_kernel(sq, epsilon)?;
    let renorm = renormalize(&w);
    let sqrt_d: DVector<f64> = renorm.d_prime.map(f64::sqrt);

    // S = D′^{-1/2} W′ D′^{-1/2} shares its spectrum with P = D′^{-1} W′.
    let mut s = renorm.w_prime;
    for (j, mut col) in s.column_iter_mut().enumerate() {
        for (i, v) in col.iter_mut().enumerate() {
            *v /= sqrt_d[i] * sqrt_d[j];
        }
    }
    // Deflate the trivial eigenvector (∝ sqrt(d′), eigenvalue 1) so it can
    // never be selected, even when the top of the spectrum is degenerate.
    let trivial = sqrt_d.normalize();
    s -= &trivial * trivial.transpose();
    let s = (&s + s.transpose()) * 0.5;

    let eig = s.try_symmetric_eigen(f64::EPSILON, 0).ok_or_else(|| {
        GeoscaleError::Numerical(format!(
            "symmetric eigensolver did not converge (n = {n}, epsilon = {epsilon:e})"
        ))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut coords = DMatrix::zeros(n, m);
    let mut eigenvalues = Vec::with_capacity(m);
    for (c, &k) in order.iter().take(m).enumerate() {
        let psi = eig.eigenvectors.column(k).component_div(&sqrt_d);
        let norm = psi.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(GeoscaleError::Numerical(format!(
                "degenerate eigenvector {c} at epsilon {epsilon:e}"
            )));
        }
        coords.set_column(c, &(psi / norm));
        eigenvalues.push(eig.eigenvalues[k]);
    }
    fix_column_signs(&mut coords);
    Ok(Embedding {
        coords,
        epsilon,
        eigenvalues,
    })
}

/// Embeds the cloud with the m leading non-trivial eigenvectors of the
/// renormalized random-walk matrix used by the graph Laplacian.
pub fn laplacian_eigenmaps(cloud: &PointCloud, epsilon: f64, m: usize) -> Result<Embedding> {
    eigenmaps_from_sq(&pairwise_sq_dists(cloud), epsilon, m)
}

/// Similarity transform taking `b` onto `a`: `a_i ≈ s Q b_i + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesFit {
    pub aligned: DMatrix<f64>,
    pub rms: f64,
    pub scale: f64,
    /// Orthogonal m × m matrix (reflections allowed).
    pub rotation: DMatrix<f64>,
    pub translation: DVector<f64>,
}

fn centered(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.mean()));
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    (out, mean)
}

/// Least-squares similarity alignment of `b` onto `a` (rows correspond).
pub fn procrustes_align(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<ProcrustesFit> {
    if a.shape() != b.shape() || a.nrows() == 0 {
        return Err(GeoscaleError::invalid(format!(
            "procrustes needs equal non-empty shapes, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (ac, a_mean) = centered(a);
    let (bc, b_mean) = centered(b);
    let b_norm2 = bc.norm_squared();
    if !(b_norm2 > 0.0) || !(ac.norm_squared() > 0.0) {
        return Err(GeoscaleError::invalid(
            "procrustes input has all points identical",
        ));
    }
    // maximize tr(Qᵀ Acᵀ Bc) over orthogonal Q
    let svd = (ac.transpose() * &bc).svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let rotation = u * v_t;
    let scale = svd.singular_values.sum() / b_norm2;
    let translation = &a_mean - (&rotation * &b_mean) * scale;

    let mut aligned = (b * rotation.transpose()) * scale;
    for (j, mut col) in aligned.column_iter_mut().enumerate() {
        col.add_scalar_mut(translation[j]);
    }
    let rms = ((a - &aligned).norm_squared() / a.nrows() as f64).sqrt();
    Ok(ProcrustesFit {
        aligned,
        rms,
        scale,
        rotation,
        translation,
    })
}

/// δ_ε for each noisy-data bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingCurve {
    pub epsilons: Vec<f64>,
    pub star_epsilons: Vec<f64>,
    /// min over ε* of the Procrustes RMS; NaN where no cell could be formed.
    #[serde(with = "nan_vec")]
    pub delta: Vec<f64>,
    /// Clean-data bandwidth attaining `delta`; NaN when missing.
    #[serde(with = "nan_vec")]
    pub argmin_eps_star: Vec<f64>,
    /// Full δ_{ε,ε*} table, rows by ε and columns by ε*.
    #[serde(with = "nan_table")]
    pub table: Vec<Vec<f64>>,
}

impl SmoothingCurve {
    /// δ at the grid value nearest to `eps` (in log scale).
    pub fn delta_near(&self, eps: f64) -> f64 {
        let k = self
            .epsilons
            .iter()
            .map(|e| (e.ln() - eps.ln()).abs())
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
            .expect("curve is never empty");
        self.delta[k]
    }

    /// Smallest defined δ on the grid.
    pub fn min_delta(&self) -> f64 {
        argmin_first(&self.delta).map_or(f64::NAN, |k| self.delta[k])
    }

    /// Columns: epsilon, delta, argmin_eps_star (`nan` for missing cells).
    pub fn to_csv(&self) -> String {
        let fmt = |v: f64| {
            if v.is_nan() {
                "nan".to_string()
            } else {
                format_f64(v)
            }
        };
        let mut out = String::from("epsilon,delta,argmin_eps_star\n");
        for k in 0..self.epsilons.len() {
            let _ = writeln!(
                out,
                "{},{},{}",
                format_f64(self.epsilons[k]),
                fmt(self.delta[k]),
                fmt(self.argmin_eps_star[k])
            );
        }
        out
    }
}

mod nan_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.is_finite().then_some(*x))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?
            .into_iter()
            .map(|x| x.unwrap_or(f64::NAN))
            .collect())
    }
}

mod nan_table {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|row| {
                row.iter()
                    .map(|x| x.is_finite().then_some(*x))
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        Ok(Vec::<Vec<Option<f64>>>::deserialize(d)?
            .into_iter()
            .map(|row| row.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
            .collect())
    }
}

/// Embeds `noisy` at every value of `grid` and `clean` at every value of
/// `star_grid`, aligns each noisy embedding to each clean one and keeps,
/// per noisy ε, the smallest RMS residual.
pub fn smoothing_delta(
    clean: &PointCloud,
    noisy: &PointCloud,
    grid: &EpsilonGrid,
    star_grid: &EpsilonGrid,
    m: usize,
) -> Result<SmoothingCurve> {
    if clean.n() != noisy.n() {
        return Err(GeoscaleError::invalid(format!(
            "clean and noisy clouds differ in size ({} vs {})",
            clean.n(),
            noisy.n()
        )));
    }
    let embed_all = |cloud: &PointCloud, grid: &EpsilonGrid| -> Result<Vec<Option<Embedding>>> {
        let sq = pairwise_sq_dists(cloud);
        grid.values()
            .par_iter()
            .map(|&e| match eigenmaps_from_sq(&sq, e, m) {
                Ok(emb) => Ok(Some(emb)),
                Err(GeoscaleError::Numerical(msg)) => {
                    log::warn!("embedding skipped: {msg}");
                    Ok(None)
                }
                Err(err) => Err(err),
            })
            .collect()
    };
    let noisy_emb = embed_all(noisy, grid)?;
    let clean_emb = embed_all(clean, star_grid)?;

    let table: Vec<Vec<f64>> = noisy_emb
        .par_iter()
        .map(|x| {
            clean_emb
                .iter()
                .map(|x_star| match (x, x_star) {
                    (Some(x), Some(x_star)) => {
                        procrustes_align(&x_star.coords, &x.coords).map_or(f64::NAN, |fit| fit.rms)
                    }
                    _ => f64::NAN,
                })
                .collect()
        })
        .collect();

    let mut delta = Vec::with_capacity(table.len());
    let mut argmin_eps_star = Vec::with_capacity(table.len());
    for row in &table {
        match argmin_first(row) {
            Some(k) => {
                delta.push(row[k]);
                argmin_eps_star.push(star_grid.values()[k]);
            }
            None => {
                delta.push(f64::NAN);
                argmin_eps_star.push(f64::NAN);
            }
        }
    }
    Ok(SmoothingCurve {
        epsilons: grid.values().to_vec(),
        star_epsilons: star_grid.values().to_vec(),
        delta,
        argmin_eps_star,
        table,
    })
}
