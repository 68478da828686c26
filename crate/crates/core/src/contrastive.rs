//! NT-Xent loss over cosine similarities, with its analytic gradient.
//!
//! Rows `2i` and `2i + 1` of a [`ViewBatch`] are the two views of sample `i`.
//! With `S` the cosine-similarity matrix and `p(i)` the partner view of `i`,
//!
//! ```text
//! loss = mean_i [ log sum_{k != i} exp(S[i][k] / tau) - S[i][p(i)] / tau ]
//! ```
//!
//! The gradient is taken with respect to the raw (unnormalized) rows, so it
//! includes the Jacobian of the cosine normalization and is orthogonal to
//! each row.

use crate::distance::{dot, sq_norm};
use crate::embedding::EmbeddingMatrix;
use crate::error::{OodError, Result};

pub const DEFAULT_TEMPERATURE: f64 = 0.5;

/// Two views per sample, interleaved, plus the temperature.
#[derive(Debug, Clone)]
pub struct ViewBatch {
    z: EmbeddingMatrix,
    tau: f64,
}

impl ViewBatch {
    pub fn new(z: EmbeddingMatrix, tau: f64) -> Result<Self> {
        if !z.n().is_multiple_of(2) || z.n() < 4 {
            return Err(OodError::Parameter(format!(
                "a view batch needs an even number of rows >= 4, got {}",
                z.n()
            )));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(OodError::Parameter(format!("temperature must be > 0, got {tau}")));
        }
        if let Some(i) = z.first_zero_row() {
            return Err(OodError::Domain(format!("view {i} is a zero vector")));
        }
        Ok(ViewBatch { z, tau })
    }

    pub fn z(&self) -> &EmbeddingMatrix {
        &self.z
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn pairs(&self) -> usize {
        self.z.n() / 2
    }
}

#[inline]
pub fn partner(i: usize) -> usize {
    i ^ 1
}

/// `S[i][j] = cos(z_i, z_j)`, with an exact unit diagonal.
pub fn cosine_similarity_matrix(z: &EmbeddingMatrix) -> Result<Vec<Vec<f64>>> {
    let norms: Vec<f64> = z.rows().map(sq_norm).collect();
    if let Some(i) = norms.iter().position(|&s| s == 0.0) {
        return Err(OodError::Domain(format!("row {i} is a zero vector")));
    }
    let m = z.n();
    let mut s = vec![vec![0.0; m]; m];
    for i in 0..m {
        s[i][i] = 1.0;
        for j in 0..i {
            let v = dot(z.row(i), z.row(j)) / (norms[i] * norms[j]).sqrt();
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    Ok(s)
}

/// Per-anchor log-softmax pieces: for anchor `i`, the log-sum-exp over
/// `k != i` of `S[i][k] / tau`.
fn log_normalizers(s: &[Vec<f64>], tau: f64) -> Vec<f64> {
    s.iter()
        .enumerate()
        .map(|(i, row)| {
            let max = row
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, v)| v / tau)
                .fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, v)| (v / tau - max).exp())
                .sum();
            max + sum.ln()
        })
        .collect()
}

pub fn nt_xent_loss(batch: &ViewBatch) -> Result<f64> {
    let s = cosine_similarity_matrix(batch.z())?;
    Ok(loss_from_similarities(&s, batch.tau()))
}

fn loss_from_similarities(s: &[Vec<f64>], tau: f64) -> f64 {
    let lse = log_normalizers(s, tau);
    let total: f64 = (0..s.len()).map(|i| lse[i] - s[i][partner(i)] / tau).sum();
    total / s.len() as f64
}

/// Loss and the gradient with respect to every row of `z`.
pub fn nt_xent_loss_and_grad(batch: &ViewBatch) -> Result<(f64, EmbeddingMatrix)> {
    let z = batch.z();
    let tau = batch.tau();
    let (m, d) = (z.n(), z.d());
    let s = cosine_similarity_matrix(z)?;
    let lse = log_normalizers(&s, tau);
    let loss = (0..m).map(|i| lse[i] - s[i][partner(i)] / tau).sum::<f64>() / m as f64;

    // coef[i][k] = d loss / d S[i][k] from anchor i's term
    let scale = 1.0 / (m as f64 * tau);
    let coef: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|k| {
                    if k == i {
                        0.0
                    } else {
                        let p = (s[i][k] / tau - lse[i]).exp();
                        let target = if k == partner(i) { 1.0 } else { 0.0 };
                        (p - target) * scale
                    }
                })
                .collect()
        })
        .collect();

    let norms: Vec<f64> = z.rows().map(|r| sq_norm(r).sqrt()).collect();
    let units: Vec<Vec<f64>> = z
        .rows()
        .zip(&norms)
        .map(|(r, n)| r.iter().map(|v| v / n).collect())
        .collect();

    let mut grad = vec![0.0; m * d];
    for i in 0..m {
        // g = sum_k (coef[i][k] + coef[k][i]) u_k, then project off u_i
        let mut g = vec![0.0; d];
        for k in 0..m {
            if k == i {
                continue;
            }
            let c = coef[i][k] + coef[k][i];
            for (gj, uk) in g.iter_mut().zip(&units[k]) {
                *gj += c * uk;
            }
        }
        let along = dot(&g, &units[i]);
        for j in 0..d {
            grad[i * d + j] = (g[j] - along * units[i][j]) / norms[i];
        }
    }
    Ok((loss, EmbeddingMatrix::new(m, d, grad)?))
}

pub fn nt_xent_grad(batch: &ViewBatch) -> Result<EmbeddingMatrix> {
    nt_xent_loss_and_grad(batch).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[[f64; 2]], tau: f64) -> ViewBatch {
        ViewBatch::new(EmbeddingMatrix::from_rows(rows).unwrap(), tau).unwrap()
    }

    #[test]
    fn identical_rows_give_ln3() {
        for tau in [0.1, 0.5, 1.0] {
            let b = batch(&[[0.3, 0.7]; 4], tau);
            let loss = nt_xent_loss(&b).unwrap();
            assert!((loss - 3f64.ln()).abs() < 1e-12, "tau={tau}: {loss}");
        }
    }

    #[test]
    fn orthogonal_negatives_closed_form() {
        let b = batch(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], 0.1);
        let loss = nt_xent_loss(&b).unwrap();
        let expected = (2.0 * (-10f64).exp()).ln_1p();
        assert!((loss - expected).abs() < 1e-15);
        assert!((loss - 9.08e-5).abs() < 1e-7);
    }

    #[test]
    fn row_rescaling_is_invisible() {
        let rows = [[1.0, 0.2], [0.9, 0.4], [-0.3, 1.0], [-0.1, 0.8]];
        let base = nt_xent_loss(&batch(&rows, 0.5)).unwrap();
        let mut scaled = rows;
        scaled[2] = [-3.0, 10.0];
        scaled[0] = [0.01, 0.002];
        let other = nt_xent_loss(&batch(&scaled, 0.5)).unwrap();
        assert!((base - other).abs() < 1e-12);
    }

    #[test]
    fn similarity_matrix_cases() {
        let ortho = EmbeddingMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]])
            .unwrap();
        let s = cosine_similarity_matrix(&ortho).unwrap();
        for (i, row) in s.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, if i == j { 1.0 } else { 0.0 });
            }
        }
        let dup = EmbeddingMatrix::from_rows(&[[0.3, -1.2, 5.0]; 4]).unwrap();
        let s = cosine_similarity_matrix(&dup).unwrap();
        assert!(s.iter().flatten().all(|&v| v == 1.0));

        let zero = EmbeddingMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(cosine_similarity_matrix(&zero), Err(OodError::Domain(_))));
    }

    #[test]
    fn batch_validation() {
        let two = EmbeddingMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(ViewBatch::new(two, 0.5).is_err());
        let four = EmbeddingMatrix::from_rows(&[[1.0, 0.0]; 4]).unwrap();
        assert!(ViewBatch::new(four.clone(), 0.0).is_err());
        let odd = EmbeddingMatrix::from_rows(&[[1.0, 0.0]; 5]).unwrap();
        assert!(ViewBatch::new(odd, 0.5).is_err());
        assert!(ViewBatch::new(four, 0.5).is_ok());
    }

    #[test]
    fn identical_batch_has_zero_gradient() {
        let b = batch(&[[0.3, 0.7]; 4], 0.5);
        let g = nt_xent_grad(&b).unwrap();
        assert!(g.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn loss_of_mismatched_pairs_is_large() {
        // positives orthogonal, a negative aligned: worse than uniform
        let b = batch(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]], 0.5);
        assert!(nt_xent_loss(&b).unwrap() > 3f64.ln());
    }
}
