//! Point clouds: synthetic manifolds, noise embedding, subsampling and CSV IO.
//!
//! Every generator is a pure function of `(n, seed)`. Each operation draws
//! from its own ChaCha stream so that, for example, the noise added to a
//! cloud never shares random numbers with the sampler that produced it.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{GeoscaleError, Result};

const STREAM_HOURGLASS: u64 = 1;
const STREAM_DOME: u64 = 2;
const STREAM_PLANE: u64 = 3;
const STREAM_NOISE: u64 = 4;
const STREAM_SUBSAMPLE: u64 = 5;

/// Minimum sample count accepted by the synthetic generators.
pub const MIN_GENERATED: usize = 10;

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// N points in R^r, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: DMatrix<f64>,
}

impl PointCloud {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(GeoscaleError::invalid(format!(
                "a point cloud needs at least 2 points, got {}",
                points.nrows()
            )));
        }
        if points.ncols() < 1 {
            return Err(GeoscaleError::invalid(
                "ambient dimension must be at least 1",
            ));
        }
        if let Some(k) = points.iter().position(|v| !v.is_finite()) {
            let (row, col) = (k % points.nrows(), k / points.nrows());
            return Err(GeoscaleError::invalid(format!(
                "non-finite coordinate at point {row}, dimension {col}"
            )));
        }
        Ok(Self { points })
    }

    /// Builds a cloud from row vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let r = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|row| row.len() != r) {
            return Err(GeoscaleError::invalid(format!(
                "row {bad} has {} coordinates, expected {r}",
                rows[bad].len()
            )));
        }
        Self::new(DMatrix::from_fn(n, r, |i, j| rows[i][j]))
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn into_points(self) -> DMatrix<f64> {
        self.points
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.row(i)).collect()
    }

    /// Coordinates in row-major order, for cache-friendly pairwise loops.
    pub(crate) fn row_major(&self) -> Vec<f64> {
        let (n, r) = self.points.shape();
        let mut out = Vec::with_capacity(n * r);
        for i in 0..n {
            for j in 0..r {
                out.push(self.points[(i, j)]);
            }
        }
        out
    }

    /// Returns a copy with every coordinate multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.points * c)
    }

    /// Returns a copy shifted by `offset` (one entry per ambient dimension).
    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.ambient_dim() {
            return Err(GeoscaleError::invalid(
                "translation has the wrong dimension",
            ));
        }
        let mut p = self.points.clone();
        for (j, o) in offset.iter().enumerate() {
            p.column_mut(j).add_scalar_mut(*o);
        }
        Self::new(p)
    }

    /// Cloud made of the listed rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(GeoscaleError::invalid(format!("index {bad} out of range")));
        }
        Self::new(self.points.select_rows(indices))
    }
}

/// Parameters for [`embed_with_noise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub ambient_dim: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(ambient_dim: usize, sigma: f64, seed: u64) -> Self {
        Self {
            ambient_dim,
            sigma,
            seed,
        }
    }
}

/// Waist radius of the hourglass as a function of height.
pub fn hourglass_radius(z: f64) -> f64 {
    0.3 + z * z
}

/// Area density (per unit height and radian) of the hourglass surface of
/// revolution: ρ(z)·sqrt(1 + ρ′(z)²).
pub fn hourglass_area_density(z: f64) -> f64 {
    hourglass_radius(z) * (1.0 + 4.0 * z * z).sqrt()
}

fn check_count(n: usize) -> Result<()> {
    if n < MIN_GENERATED {
        return Err(GeoscaleError::invalid(format!(
            "generators need n >= {MIN_GENERATED}, got {n}"
        )));
    }
    Ok(())
}

/// Samples `n` points uniformly by area from the hourglass, the surface of
/// revolution x² + y² = (0.3 + z²)² for z in [-1, 1].
pub fn generate_hourglass(n: usize, seed: u64) -> Result<PointCloud> {
    check_count(n)?;
    let mut rng = rng_for(seed, STREAM_HOURGLASS);
    let max_density = hourglass_area_density(1.0);
    let mut points = DMatrix::zeros(n, 3);
    let mut k = 0;
    while k < n {
        let z: f64 = rng.random_range(-1.0..=1.0);
        let u: f64 = rng.random();
        if u * max_density > hourglass_area_density(z) {
            continue;
        }
        let theta: f64 = rng.random_range(0.0..2.0 * PI);
        let rho = hourglass_radius(z);
        points[(k, 0)] = rho * theta.cos();
        points[(k, 1)] = rho * theta.sin();
        points[(k, 2)] = z;
        k += 1;
    }
    PointCloud::new(points)
}

/// Samples `n` points uniformly from the closed unit upper hemisphere.
pub fn generate_dome(n: usize, seed: u64) -> Result<PointCloud> {
    check_count(n)?;
    let mut rng = rng_for(seed, STREAM_DOME);
    let mut points = DMatrix::zeros(n, 3);
    let mut k = 0;
    while k < n {
        let v: [f64; 3] = [
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm < 1e-12 {
            continue;
        }
        points[(k, 0)] = v[0] / norm;
        points[(k, 1)] = v[1] / norm;
        points[(k, 2)] = (v[2] / norm).abs();
        k += 1;
    }
    PointCloud::new(points)
}

/// Samples `n` points uniformly from the unit square [0, 1]² (r = 2).
pub fn generate_plane(n: usize, seed: u64) -> Result<PointCloud> {
    check_count(n)?;
    let mut rng = rng_for(seed, STREAM_PLANE);
    let points = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
    // from_fn visits column-major; that is still a pure function of the seed.
    PointCloud::new(points)
}

/// Zero-pads `cloud` to `spec.ambient_dim` columns, then adds iid
/// N(0, σ²) noise to every coordinate.
pub fn embed_with_noise(cloud: &PointCloud, spec: &NoiseSpec) -> Result<PointCloud> {
    if spec.ambient_dim < cloud.ambient_dim() {
        return Err(GeoscaleError::invalid(format!(
            "ambient_dim {} is smaller than the cloud's dimension {}",
            spec.ambient_dim,
            cloud.ambient_dim()
        )));
    }
    if !(spec.sigma >= 0.0) || !spec.sigma.is_finite() {
        return Err(GeoscaleError::invalid(format!(
            "noise sigma must be finite and >= 0, got {}",
            spec.sigma
        )));
    }
    let (n, r) = (cloud.n(), cloud.ambient_dim());
    let mut points = DMatrix::zeros(n, spec.ambient_dim);
    points.view_mut((0, 0), (n, r)).copy_from(cloud.points());
    if spec.sigma > 0.0 {
        let normal =
            Normal::new(0.0, spec.sigma).map_err(|e| GeoscaleError::invalid(e.to_string()))?;
        let mut rng = rng_for(spec.seed, STREAM_NOISE);
        for i in 0..n {
            for j in 0..spec.ambient_dim {
                points[(i, j)] += normal.sample(&mut rng);
            }
        }
    }
    PointCloud::new(points)
}

/// Draws `n_prime` distinct indices from `0..cloud.n()` uniformly without
/// replacement.
pub fn subsample(cloud: &PointCloud, n_prime: usize, seed: u64) -> Result<Vec<usize>> {
    subsample_indices(cloud.n(), n_prime, seed)
}

pub(crate) fn subsample_indices(n: usize, n_prime: usize, seed: u64) -> Result<Vec<usize>> {
    if n_prime == 0 || n_prime > n {
        return Err(GeoscaleError::invalid(format!(
            "subsample size must be in 1..={n}, got {n_prime}"
        )));
    }
    if n_prime == n {
        return Ok((0..n).collect());
    }
    let mut rng = rng_for(seed, STREAM_SUBSAMPLE);
    Ok(index::sample(&mut rng, n, n_prime).into_vec())
}

/// Formats a double so that parsing it back yields the identical value.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes one point per line, comma separated, no header.
pub fn save_csv(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, cloud_to_csv(cloud))?;
    Ok(())
}

pub fn cloud_to_csv(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for i in 0..cloud.n() {
        let line: Vec<String> = cloud
            .points()
            .row(i)
            .iter()
            .map(|v| format_f64(*v))
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Reads a numeric CSV, one point per row. A first row containing any
/// non-numeric field is taken as a header. Error positions are 1-based
/// line and field numbers.
pub fn load_csv(path: impl AsRef<Path>) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<PointCloud> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| GeoscaleError::Format(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, _>> =
            record.iter().map(str::parse::<f64>).collect();
        if first {
            first = false;
            if parsed.iter().any(|p| p.is_err()) {
                continue;
            }
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(GeoscaleError::Parse {
                row: line,
                column: record.len().min(expected) + 1,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        let mut row = Vec::with_capacity(expected);
        for (k, p) in parsed.into_iter().enumerate() {
            match p {
                Ok(v) if v.is_finite() => row.push(v),
                Ok(v) => {
                    return Err(GeoscaleError::Parse {
                        row: line,
                        column: k + 1,
                        message: format!("non-finite value {v}"),
                    })
                }
                Err(_) => {
                    return Err(GeoscaleError::Parse {
                        row: line,
                        column: k + 1,
                        message: format!("not a number: {:?}", &record[k]),
                    })
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(GeoscaleError::Format("no data rows".into()));
    }
    PointCloud::from_rows(&rows)
}
