//! Single-Gaussian Mahalanobis scoring.
//!
//! Fits the sample mean and unbiased covariance of the reference embeddings,
//! loads the diagonal with `epsilon`, and keeps the Cholesky factor `L` of
//! `sigma + epsilon * I`. A query scores `|L^-1 (x - mu)|`, the square-root
//! Mahalanobis distance; higher is more out-of-distribution.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::codec::{read_file, write_file, Reader, Writer};
use crate::embedding::EmbeddingMatrix;
use crate::error::{OodError, Result};

pub const SSD_MAGIC: &[u8; 4] = b"SSDM";
pub const SSD_VERSION: u8 = 1;

/// Relative diagonal loading used when no explicit epsilon is given:
/// `epsilon = DEFAULT_SHRINKAGE * trace(sigma) / d`.
pub const DEFAULT_SHRINKAGE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    epsilon: f64,
    /// Lower-triangular Cholesky factor of `sigma + epsilon * I`.
    factor: DMatrix<f64>,
}

fn mean_and_covariance(train: &EmbeddingMatrix) -> (DVector<f64>, DMatrix<f64>) {
    let (n, d) = (train.n(), train.d());
    let mut mu = DVector::zeros(d);
    for row in train.rows() {
        for (m, v) in mu.iter_mut().zip(row) {
            *m += v;
        }
    }
    mu /= n as f64;

    let mut sigma = DMatrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in train.rows() {
        for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(mu.iter())) {
            *c = v - m;
        }
        for a in 0..d {
            let ca = centered[a];
            for b in 0..=a {
                sigma[(a, b)] += ca * centered[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in 0..=a {
            let v = sigma[(a, b)] / denom;
            sigma[(a, b)] = v;
            sigma[(b, a)] = v;
        }
    }
    (mu, sigma)
}

/// Fits with an explicit diagonal loading `epsilon >= 0`.
pub fn fit_gaussian(train: &EmbeddingMatrix, epsilon: f64) -> Result<GaussianStats> {
    if train.n() < 2 {
        return Err(OodError::Parameter(format!(
            "covariance needs at least 2 samples, got {}",
            train.n()
        )));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(OodError::Parameter(format!(
            "epsilon must be finite and >= 0, got {epsilon}"
        )));
    }
    let (mu, sigma) = mean_and_covariance(train);
    GaussianStats::from_parts(mu, sigma, epsilon)
}

/// Fits with the scale-aware default `epsilon = 1e-3 * trace(sigma) / d`.
pub fn fit_gaussian_default(train: &EmbeddingMatrix) -> Result<GaussianStats> {
    if train.n() < 2 {
        return Err(OodError::Parameter(format!(
            "covariance needs at least 2 samples, got {}",
            train.n()
        )));
    }
    let (mu, sigma) = mean_and_covariance(train);
    let epsilon = DEFAULT_SHRINKAGE * sigma.trace() / train.d() as f64;
    GaussianStats::from_parts(mu, sigma, epsilon)
}

impl GaussianStats {
    fn from_parts(mu: DVector<f64>, sigma: DMatrix<f64>, epsilon: f64) -> Result<Self> {
        let d = mu.len();
        let loaded = &sigma + DMatrix::identity(d, d) * epsilon;
        let chol = loaded.cholesky().ok_or_else(|| {
            OodError::Numerical(format!(
                "covariance + {epsilon:e} I is not positive definite; use a larger epsilon"
            ))
        })?;
        Ok(GaussianStats {
            mu,
            sigma,
            epsilon,
            factor: chol.unpack(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn score(&self, query: &[f64]) -> Result<f64> {
        let d = self.dim();
        if query.len() != d {
            return Err(OodError::Parameter(format!(
                "query has dimension {}, model has {d}",
                query.len()
            )));
        }
        // forward substitution L y = x - mu
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut acc = query[i] - self.mu[i];
            for (j, yj) in y.iter().enumerate().take(i) {
                acc -= self.factor[(i, j)] * yj;
            }
            y[i] = acc / self.factor[(i, i)];
        }
        Ok(y.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    pub fn score_batch(&self, queries: &EmbeddingMatrix) -> Result<Vec<f64>> {
        (0..queries.n())
            .into_par_iter()
            .map(|i| self.score(queries.row(i)))
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let d = u32::try_from(self.dim())
            .map_err(|_| OodError::Parameter("dimension exceeds u32".into()))?;
        let mut w = Writer::new(SSD_MAGIC, SSD_VERSION);
        w.u32(d);
        w.f64(self.epsilon);
        w.f64s(self.mu.as_slice());
        // nalgebra is column-major; sigma is symmetric so the order is moot,
        // but rows are written explicitly to keep the layout row-major
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                w.f64(self.sigma[(i, j)]);
            }
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, version) = Reader::open(bytes, SSD_MAGIC, "SSD model")?;
        if version != SSD_VERSION {
            return Err(OodError::Format(format!(
                "SSD model: unsupported version {version}"
            )));
        }
        let d = r.u32()? as usize;
        if d == 0 {
            return Err(OodError::Format("SSD model: zero dimension".into()));
        }
        let epsilon = r.f64()?;
        let mu = DVector::from_vec(r.f64s(d)?);
        let sigma = DMatrix::from_row_slice(d, d, &r.f64s(d * d)?);
        r.expect_end()?;
        if !(epsilon.is_finite() && epsilon >= 0.0)
            || mu.iter().chain(sigma.iter()).any(|v| !v.is_finite())
        {
            return Err(OodError::Format("SSD model: non-finite parameters".into()));
        }
        Self::from_parts(mu, sigma, epsilon)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

pub fn mahalanobis_score(query: &[f64], stats: &GaussianStats) -> Result<f64> {
    stats.score(query)
}

pub fn mahalanobis_score_batch(queries: &EmbeddingMatrix, stats: &GaussianStats) -> Result<Vec<f64>> {
    stats.score_batch(queries)
}
