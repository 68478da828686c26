//! Straight-line reference implementations used as test oracles. Nothing
//! here calls into the crate's numeric kernels.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, sd: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(rng);
                    sd * e
                })
                .collect()
        })
        .collect()
}

pub fn uniform_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    let u = Uniform::new(0.0, 1.0).unwrap();
    (0..n).map(|_| (0..d).map(|_| u.sample(rng)).collect()).collect()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OracleMetric {
    Cosine,
    Euclidean,
    /// `|a - b|^2 / 2`, which equals cosine distance on unit rows.
    HalfSquaredEuclidean,
}

pub fn oracle_distance(m: OracleMetric, a: &[f64], b: &[f64]) -> f64 {
    match m {
        OracleMetric::Euclidean => {
            let mut s = 0.0;
            for i in 0..a.len() {
                s += (a[i] - b[i]) * (a[i] - b[i]);
            }
            s.sqrt()
        }
        OracleMetric::HalfSquaredEuclidean => {
            let mut s = 0.0;
            for i in 0..a.len() {
                s += (a[i] - b[i]) * (a[i] - b[i]);
            }
            s / 2.0
        }
        OracleMetric::Cosine => {
            let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
            for i in 0..a.len() {
                ab += a[i] * b[i];
                aa += a[i] * a[i];
                bb += b[i] * b[i];
            }
            1.0 - ab / (aa.sqrt() * bb.sqrt())
        }
    }
}

/// Sorted (distance, index) list of every train point, optionally without `skip`.
pub fn full_sort(
    m: OracleMetric,
    q: &[f64],
    train: &[Vec<f64>],
    skip: Option<usize>,
) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, t)| (oracle_distance(m, q, t), i))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all
}

pub struct OracleLof {
    pub kdist: Vec<f64>,
    pub lrd: Vec<f64>,
    pub neighbors: Vec<Vec<usize>>,
    metric: OracleMetric,
    k: usize,
    train: Vec<Vec<f64>>,
}

impl OracleLof {
    pub fn fit(train: &[Vec<f64>], k: usize, metric: OracleMetric) -> Self {
        let n = train.len();
        // full distance matrix
        let mut dist = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                dist[i][j] = oracle_distance(metric, &train[i], &train[j]);
            }
        }
        let mut neighbors = Vec::new();
        let mut kdist = Vec::new();
        for i in 0..n {
            let mut row: Vec<(f64, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (dist[i][j], j)).collect();
            row.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            kdist.push(row[k - 1].0);
            neighbors.push(row[..k].iter().map(|x| x.1).collect::<Vec<_>>());
        }
        let mut lrd = Vec::new();
        for i in 0..n {
            let mut s = 0.0;
            for &o in &neighbors[i] {
                let r = if dist[i][o] > kdist[o] { dist[i][o] } else { kdist[o] };
                s += if r < 1e-12 { 1e-12 } else { r };
            }
            lrd.push(1.0 / (s / k as f64));
        }
        OracleLof {
            kdist,
            lrd,
            neighbors,
            metric,
            k,
            train: train.to_vec(),
        }
    }

    pub fn score(&self, q: &[f64]) -> f64 {
        let sorted = full_sort(self.metric, q, &self.train, None);
        let nbrs = &sorted[..self.k];
        let mut reach = 0.0;
        let mut lrd_sum = 0.0;
        for &(d, o) in nbrs {
            let r = if d > self.kdist[o] { d } else { self.kdist[o] };
            reach += if r < 1e-12 { 1e-12 } else { r };
            lrd_sum += self.lrd[o];
        }
        let lrd_q = 1.0 / (reach / self.k as f64);
        (lrd_sum / self.k as f64) / lrd_q
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Relative error for gradient entries: `|a - f| / max(|a|, |f|, 1e-3)`.
/// Finite-difference truncation error is absolute, so entries far below the
/// floor are compared at the floor's scale.
pub fn grad_rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-3)
}

/// Pairwise-counting AUROC: `(#(ood > id) + #(ood == id) / 2) / (n m)`.
pub fn pairwise_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut gt = 0u64;
    let mut eq = 0u64;
    for &o in ood {
        for &i in id {
            if o > i {
                gt += 1;
            } else if o == i {
                eq += 1;
            }
        }
    }
    (gt as f64 + 0.5 * eq as f64) / (id.len() as f64 * ood.len() as f64)
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Mean and unbiased covariance, two-pass.
pub fn mean_cov(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut mu = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            mu[j] += r[j] / n as f64;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (r[a] - mu[a]) * (r[b] - mu[b]) / (n - 1) as f64;
            }
        }
    }
    (mu, cov)
}

pub fn quad_form_sqrt(x: &[f64], mu: &[f64], inv: &[Vec<f64>]) -> f64 {
    let d = x.len();
    let diff: Vec<f64> = (0..d).map(|i| x[i] - mu[i]).collect();
    let mut s = 0.0;
    for a in 0..d {
        for b in 0..d {
            s += diff[a] * inv[a][b] * diff[b];
        }
    }
    s.sqrt()
}

/// NT-Xent written directly from the definition, no stabilization tricks
/// beyond what f64 needs at the temperatures tested.
pub fn oracle_nt_xent(z: &[Vec<f64>], tau: f64) -> f64 {
    let m = z.len();
    let cos = |a: &[f64], b: &[f64]| {
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for i in 0..a.len() {
            ab += a[i] * b[i];
            aa += a[i] * a[i];
            bb += b[i] * b[i];
        }
        ab / (aa.sqrt() * bb.sqrt())
    };
    let mut total = 0.0;
    for i in 0..m {
        let p = i ^ 1;
        let num = (cos(&z[i], &z[p]) / tau).exp();
        let den: f64 = (0..m).filter(|&k| k != i).map(|k| (cos(&z[i], &z[k]) / tau).exp()).sum();
        total += -(num / den).ln();
    }
    total / m as f64
}

/// Central finite differences of `f` at `x` with step `h`.
pub fn central_differences(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut p = x.to_vec();
            p[j] += h;
            let mut m = x.to_vec();
            m[j] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}
