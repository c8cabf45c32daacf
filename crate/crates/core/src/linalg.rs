//! Small dense linear-algebra helpers shared by the estimators.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::error::{GeoscaleError, Result};

/// Relative gap below which two eigenvalues are treated as equal.
pub const EIGEN_TIE_TOL: f64 = 1e-12;

/// Eigen-decomposition of a symmetric matrix with a reproducible layout.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    /// Eigenvalues in non-increasing order.
    pub values: DVector<f64>,
    /// Unit eigenvectors as columns, matching `values`.
    pub vectors: DMatrix<f64>,
    /// `ties[k]` is true when eigenvalue `k` equals eigenvalue `k + 1`
    /// within [`EIGEN_TIE_TOL`].
    pub ties: Vec<bool>,
}

/// Flips each column so that its largest-magnitude entry is positive.
/// Ties in magnitude resolve to the lowest row index.
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for (k, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = k;
            }
        }
        if best_abs > 0.0 && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

fn lexicographic_desc(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match y.partial_cmp(x).unwrap_or(Ordering::Equal) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

/// Symmetric eigen-decomposition sorted by decreasing eigenvalue.
///
/// Columns are sign-fixed (largest-magnitude entry positive). Within a group
/// of equal eigenvalues, vectors are ordered lexicographically (descending)
/// by their entries so the layout does not depend on solver internals.
pub fn sorted_symmetric_eigen(a: &DMatrix<f64>) -> SortedEigen {
    let n = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let mut vectors = eig.eigenvectors;
    fix_column_signs(&mut vectors);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(Ordering::Equal)
    });

    let scale = eig
        .eigenvalues
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let tie = |x: f64, y: f64| (x - y).abs() <= EIGEN_TIE_TOL * scale;

    // Re-order runs of tied eigenvalues by their vectors.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && tie(eig.eigenvalues[order[end - 1]], eig.eigenvalues[order[end]]) {
            end += 1;
        }
        if end - start > 1 {
            let cols: Vec<Vec<f64>> = (0..n)
                .map(|c| vectors.column(c).iter().copied().collect())
                .collect();
            order[start..end].sort_by(|&i, &j| lexicographic_desc(&cols[i], &cols[j]));
        }
        start = end;
    }

    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let sorted = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    let ties = (0..n)
        .map(|k| k + 1 < n && tie(values[k], values[k + 1]))
        .collect();
    SortedEigen {
        values,
        vectors: sorted,
        ties,
    }
}

/// Largest absolute entry of `a - aᵀ`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Returns `(a + aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Spectral norm of a symmetric matrix: the largest absolute eigenvalue.
pub fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() {
        return Err(GeoscaleError::invalid(format!(
            "spectral_norm expects a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let scale = a.amax().max(1.0);
    if asymmetry(a) > 1e-8 * scale {
        return Err(GeoscaleError::invalid(
            "spectral_norm expects a symmetric matrix",
        ));
    }
    let sym = symmetrize(a);
    if sym.nrows() == 1 {
        return Ok(sym[(0, 0)].abs());
    }
    let values = sym.symmetric_eigenvalues();
    Ok(values.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}
