//! Python bindings. Point clouds cross the boundary as lists of rows.

use geoscale_core as core;
use geoscale_core::{DistortionOptions, GeoscaleError, MetricKind, NormKind};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: GeoscaleError) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let r = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != r) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(DMatrix::from_fn(n, r, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn options(d_prime: usize, metric: &str, norm: &str) -> PyResult<DistortionOptions> {
    let metric = match metric {
        "dual" => MetricKind::Dual,
        "inverse" => MetricKind::Inverse,
        other => return Err(PyValueError::new_err(format!("unknown metric {other:?}"))),
    };
    let norm = match norm {
        "squared" => NormKind::Squared,
        "plain" => NormKind::Plain,
        other => return Err(PyValueError::new_err(format!("unknown norm {other:?}"))),
    };
    Ok(DistortionOptions {
        d_prime,
        metric,
        norm,
    })
}

/// N points in R^r.
#[pyclass(name = "PointCloud", frozen)]
struct PyPointCloud {
    inner: core::PointCloud,
}

#[pymethods]
impl PyPointCloud {
    #[new]
    fn new(points: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = core::PointCloud::new(matrix(&points)?).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load_csv(path: &str) -> PyResult<Self> {
        let inner = core::load_csv(path).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn save_csv(&self, path: &str) -> PyResult<()> {
        core::save_csv(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        rows(self.inner.points())
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "PointCloud(n={}, ambient_dim={})",
            self.inner.n(),
            self.inner.ambient_dim()
        )
    }
}

/// Distortion over an ε grid and its minimizer.
#[pyclass(name = "DistortionCurve", frozen)]
struct PyDistortionCurve {
    inner: core::DistortionCurve,
}

#[pymethods]
impl PyDistortionCurve {
    #[getter]
    fn epsilons(&self) -> Vec<f64> {
        self.inner.results.iter().map(|r| r.epsilon).collect()
    }

    /// Distortion per grid value; NaN where it is undefined.
    #[getter]
    fn distortions(&self) -> Vec<f64> {
        self.inner.results.iter().map(|r| r.distortion).collect()
    }

    #[getter]
    fn eps_hat(&self) -> f64 {
        self.inner.eps_hat
    }

    #[getter]
    fn argmin(&self) -> usize {
        self.inner.argmin()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __repr__(&self) -> String {
        format!(
            "DistortionCurve(eps_hat={}, grid_size={})",
            self.inner.eps_hat,
            self.inner.results.len()
        )
    }
}

#[pyfunction]
fn generate_hourglass(n: usize, seed: u64) -> PyResult<PyPointCloud> {
    let inner = core::generate_hourglass(n, seed).map_err(py_err)?;
    Ok(PyPointCloud { inner })
}

#[pyfunction]
fn generate_dome(n: usize, seed: u64) -> PyResult<PyPointCloud> {
    let inner = core::generate_dome(n, seed).map_err(py_err)?;
    Ok(PyPointCloud { inner })
}

#[pyfunction]
fn generate_plane(n: usize, seed: u64) -> PyResult<PyPointCloud> {
    let inner = core::generate_plane(n, seed).map_err(py_err)?;
    Ok(PyPointCloud { inner })
}

/// Zero-pads to `ambient_dim` columns and adds N(0, σ²) to every entry.
#[pyfunction]
fn embed_with_noise(
    cloud: &PyPointCloud,
    ambient_dim: usize,
    sigma: f64,
    seed: u64,
) -> PyResult<PyPointCloud> {
    let spec = core::NoiseSpec::new(ambient_dim, sigma, seed);
    let inner = core::embed_with_noise(&cloud.inner, &spec).map_err(py_err)?;
    Ok(PyPointCloud { inner })
}

#[pyfunction]
fn subsample(cloud: &PyPointCloud, n_prime: usize, seed: u64) -> PyResult<Vec<usize>> {
    core::subsample(&cloud.inner, n_prime, seed).map_err(py_err)
}

/// Automatic (ε_min, ε_max) for a cloud.
#[pyfunction]
#[pyo3(signature = (cloud, gamma = core::kernel::DEFAULT_GAMMA))]
fn epsilon_range(cloud: &PyPointCloud, gamma: f64) -> PyResult<(f64, f64)> {
    let sq = core::pairwise_sq_dists(&cloud.inner);
    let lo = core::epsilon_min(&sq, gamma).map_err(py_err)?;
    let hi = core::epsilon_max(&sq).map_err(py_err)?;
    Ok((lo, hi))
}

#[pyfunction]
#[pyo3(signature = (eps_min, eps_max, count = core::kernel::DEFAULT_GRID_COUNT))]
fn log_grid(eps_min: f64, eps_max: f64, count: usize) -> PyResult<Vec<f64>> {
    let grid = core::log_grid(eps_min, eps_max, count).map_err(py_err)?;
    Ok(grid.values().to_vec())
}

/// Distortion at one ε over the given evaluation points.
/// Returns (distortion, mean deviation, failed point indices).
#[pyfunction]
#[pyo3(signature = (cloud, epsilon, indices, d_prime = 1, metric = "dual", norm = "squared"))]
fn compute_distortion(
    cloud: &PyPointCloud,
    epsilon: f64,
    indices: Vec<usize>,
    d_prime: usize,
    metric: &str,
    norm: &str,
) -> PyResult<(f64, f64, Vec<usize>)> {
    let opts = options(d_prime, metric, norm)?;
    let r = core::compute_distortion(&cloud.inner, epsilon, &indices, &opts).map_err(py_err)?;
    let dev = r.mean_deviation();
    Ok((r.distortion, dev, r.failures))
}

/// Selects ε̂ on `grid`, or on the automatic 20-point grid when omitted.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (cloud, grid = None, n_prime = 200, seed = 0, d_prime = 1, metric = "dual", norm = "squared"))]
fn select_bandwidth(
    py: Python<'_>,
    cloud: &PyPointCloud,
    grid: Option<Vec<f64>>,
    n_prime: usize,
    seed: u64,
    d_prime: usize,
    metric: &str,
    norm: &str,
) -> PyResult<PyDistortionCurve> {
    let opts = options(d_prime, metric, norm)?;
    let cloud = cloud.inner.clone();
    let inner = py
        .detach(move || {
            let grid = match grid {
                Some(v) => core::EpsilonGrid::from_values(v)?,
                None => core::kernel::default_grid(
                    &core::pairwise_sq_dists(&cloud),
                    core::kernel::DEFAULT_GAMMA,
                    core::kernel::DEFAULT_GRID_COUNT,
                )?,
            };
            core::select_bandwidth(&cloud, &grid, n_prime, seed, &opts)
        })
        .map_err(py_err)?;
    Ok(PyDistortionCurve { inner })
}

/// Leave-one-out kernel-regression error Rec(ε).
#[pyfunction]
fn reconstruction_error(cloud: &PyPointCloud, epsilon: f64) -> PyResult<f64> {
    core::reconstruction_error(&cloud.inner, epsilon).map_err(py_err)
}

/// m-dimensional Laplacian eigenmap: (coordinates, eigenvalues).
#[pyfunction]
fn laplacian_eigenmaps(
    cloud: &PyPointCloud,
    epsilon: f64,
    m: usize,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let e = core::laplacian_eigenmaps(&cloud.inner, epsilon, m).map_err(py_err)?;
    Ok((rows(&e.coords), e.eigenvalues))
}

/// Aligns `b` onto `a` by a similarity: (aligned b, RMS residual).
#[pyfunction]
fn procrustes_align(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let fit = core::procrustes_align(&matrix(&a)?, &matrix(&b)?).map_err(py_err)?;
    Ok((rows(&fit.aligned), fit.rms))
}

#[pymodule]
#[pyo3(name = "geoscale")]
fn geoscale_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPointCloud>()?;
    m.add_class::<PyDistortionCurve>()?;
    m.add_function(wrap_pyfunction!(generate_hourglass, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dome, m)?)?;
    m.add_function(wrap_pyfunction!(generate_plane, m)?)?;
    m.add_function(wrap_pyfunction!(embed_with_noise, m)?)?;
    m.add_function(wrap_pyfunction!(subsample, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_range, m)?)?;
    m.add_function(wrap_pyfunction!(log_grid, m)?)?;
    m.add_function(wrap_pyfunction!(compute_distortion, m)?)?;
    m.add_function(wrap_pyfunction!(select_bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruction_error, m)?)?;
    m.add_function(wrap_pyfunction!(laplacian_eigenmaps, m)?)?;
    m.add_function(wrap_pyfunction!(procrustes_align, m)?)?;
    Ok(())
}
