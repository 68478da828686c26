//! Local Outlier Factor in novelty mode.
//!
//! A model is fitted on reference (in-distribution) embeddings. For each
//! reference point `p` we keep its `K` nearest other reference points, its
//! k-distance, and its local reachability density
//!
//! ```text
//! reach(p, o) = max(kdist(o), d(p, o))
//! lrd(p)      = 1 / mean_{o in N_K(p)} reach(p, o)
//! ```
//!
//! A query `q` is never part of any reference neighborhood. Its score is
//! `mean_{o in N_K(q)} lrd(o) / lrd(q)`; values near 1 are inliers and larger
//! values are more out-of-distribution.
//!
//! Neighborhoods hold exactly `K` points. Ties at equal distance go to the
//! lower reference index. Reachability distances are clamped below by
//! [`REACH_FLOOR`] so duplicated reference points keep a finite density.

use std::borrow::Cow;
use std::cmp::Ordering;
use std::path::Path;

use rayon::prelude::*;

use crate::codec::{read_file, write_file, Reader, Writer};
use crate::distance::{cosine_from_parts, dot, euclidean_unchecked, sq_norm, Metric};
use crate::embedding::EmbeddingMatrix;
use crate::error::{OodError, Result};

pub const LOF_MAGIC: &[u8; 4] = b"LOFM";
pub const LOF_VERSION: u8 = 1;

/// Lower bound applied to every reachability distance before averaging.
pub const REACH_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub indices: Vec<usize>,
    /// Non-decreasing.
    pub distances: Vec<f64>,
}

impl NeighborList {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The first `k` neighbors.
    pub fn truncated(&self, k: usize) -> NeighborList {
        NeighborList {
            indices: self.indices[..k].to_vec(),
            distances: self.distances[..k].to_vec(),
        }
    }

    pub fn kth_distance(&self) -> f64 {
        *self.distances.last().expect("non-empty neighbor list")
    }
}

#[inline]
pub fn reach_dist(p_to_o_distance: f64, kdist_o: f64) -> f64 {
    p_to_o_distance.max(kdist_o)
}

#[inline]
fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Reference set prepared for repeated distance evaluation.
struct Reference<'a> {
    train: &'a EmbeddingMatrix,
    metric: Metric,
    sq_norms: Cow<'a, [f64]>,
}

impl<'a> Reference<'a> {
    fn new(train: &'a EmbeddingMatrix, metric: Metric) -> Result<Self> {
        let sq_norms: Vec<f64> = train.rows().map(sq_norm).collect();
        if metric == Metric::Cosine {
            if let Some(i) = sq_norms.iter().position(|&s| s == 0.0) {
                return Err(OodError::Domain(format!(
                    "reference row {i} is a zero vector; cosine distance is undefined"
                )));
            }
        }
        Ok(Reference {
            train,
            metric,
            sq_norms: Cow::Owned(sq_norms),
        })
    }

    fn check_query(&self, q: &[f64]) -> Result<f64> {
        if q.len() != self.train.d() {
            return Err(OodError::Parameter(format!(
                "query has dimension {}, reference has {}",
                q.len(),
                self.train.d()
            )));
        }
        let qq = sq_norm(q);
        if self.metric == Metric::Cosine && qq == 0.0 {
            return Err(OodError::Domain(
                "zero query vector has no cosine distance".into(),
            ));
        }
        Ok(qq)
    }

    #[inline]
    fn distance(&self, q: &[f64], qq: f64, i: usize) -> f64 {
        let row = self.train.row(i);
        match self.metric {
            Metric::Euclidean => euclidean_unchecked(q, row),
            Metric::Cosine => cosine_from_parts(dot(q, row), qq, self.sq_norms[i]),
        }
    }

    /// The `k` nearest reference points to `q`, optionally skipping one index.
    fn nearest(&self, q: &[f64], qq: f64, k: usize, exclude: Option<usize>) -> NeighborList {
        let n = self.train.n();
        let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
        // rows are visited in blocks so each block of the reference stays hot
        const BLOCK: usize = 256;
        for start in (0..n).step_by(BLOCK) {
            for i in start..(start + BLOCK).min(n) {
                if Some(i) != exclude {
                    cand.push((self.distance(q, qq, i), i));
                }
            }
        }
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, by_distance_then_index);
            cand.truncate(k);
        }
        cand.sort_unstable_by(by_distance_then_index);
        NeighborList {
            indices: cand.iter().map(|c| c.1).collect(),
            distances: cand.iter().map(|c| c.0).collect(),
        }
    }

    fn self_neighbors(&self, k: usize) -> Vec<NeighborList> {
        (0..self.train.n())
            .into_par_iter()
            .map(|i| {
                let row = self.train.row(i);
                self.nearest(row, self.sq_norms[i], k, Some(i))
            })
            .collect()
    }

    fn is_degenerate(&self) -> bool {
        let first = self.train.row(0);
        let ff = self.sq_norms[0];
        (1..self.train.n()).all(|i| self.distance(first, ff, i) == 0.0)
    }
}

/// Exact K nearest reference points to `query`. Queries are external, so a
/// query equal to a reference row finds that row at distance 0.
pub fn knn_query(
    query: &[f64],
    train: &EmbeddingMatrix,
    k: usize,
    metric: Metric,
) -> Result<NeighborList> {
    if k == 0 || k > train.n() {
        return Err(OodError::Parameter(format!(
            "k must be in 1..={}, got {k}",
            train.n()
        )));
    }
    let reference = Reference::new(train, metric)?;
    let qq = reference.check_query(query)?;
    Ok(reference.nearest(query, qq, k, None))
}

fn check_fit_params(train: &EmbeddingMatrix, k: usize) -> Result<()> {
    if train.n() < 2 {
        return Err(OodError::Parameter(format!(
            "LOF needs at least 2 reference points, got {}",
            train.n()
        )));
    }
    if k == 0 || k >= train.n() {
        return Err(OodError::Parameter(format!(
            "k must be in 1..{} for {} reference points, got {k}",
            train.n(),
            train.n()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LofModel {
    train: EmbeddingMatrix,
    k: usize,
    metric: Metric,
    kdist: Vec<f64>,
    neighbors: Vec<NeighborList>,
    lrd: Vec<f64>,
    sq_norms: Vec<f64>,
}

/// Fits a novelty-mode LOF model on `train`.
pub fn fit_lof(train: &EmbeddingMatrix, k: usize, metric: Metric) -> Result<LofModel> {
    check_fit_params(train, k)?;
    let reference = Reference::new(train, metric)?;
    if reference.is_degenerate() {
        return Err(OodError::Degenerate(
            "all reference points coincide under the metric".into(),
        ));
    }
    let neighbors = reference.self_neighbors(k);
    let sq_norms = reference.sq_norms.into_owned();
    Ok(LofModel::assemble(train.clone(), k, metric, neighbors, sq_norms))
}

impl LofModel {
    fn assemble(
        train: EmbeddingMatrix,
        k: usize,
        metric: Metric,
        neighbors: Vec<NeighborList>,
        sq_norms: Vec<f64>,
    ) -> Self {
        let kdist: Vec<f64> = neighbors.iter().map(NeighborList::kth_distance).collect();
        let lrd = neighbors
            .iter()
            .map(|nb| local_reachability_density(nb, &kdist))
            .collect();
        LofModel {
            train,
            k,
            metric,
            kdist,
            neighbors,
            lrd,
            sq_norms,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn train(&self) -> &EmbeddingMatrix {
        &self.train
    }

    pub fn kdist(&self) -> &[f64] {
        &self.kdist
    }

    pub fn lrd(&self) -> &[f64] {
        &self.lrd
    }

    pub fn neighbors(&self) -> &[NeighborList] {
        &self.neighbors
    }

    fn reference(&self) -> Reference<'_> {
        Reference {
            train: &self.train,
            metric: self.metric,
            sq_norms: Cow::Borrowed(&self.sq_norms),
        }
    }

    /// LOF of a query whose `K` nearest reference neighbors are already known.
    pub fn score_from_neighbors(&self, nb: &NeighborList) -> f64 {
        debug_assert_eq!(nb.len(), self.k);
        let lrd_q = local_reachability_density(nb, &self.kdist);
        let mean_lrd = nb.indices.iter().map(|&o| self.lrd[o]).sum::<f64>() / nb.len() as f64;
        mean_lrd / lrd_q
    }

    pub fn score(&self, query: &[f64]) -> Result<f64> {
        let reference = self.reference();
        let qq = reference.check_query(query)?;
        Ok(self.score_from_neighbors(&reference.nearest(query, qq, self.k, None)))
    }

    /// Scores every row of `queries` on the current rayon pool.
    pub fn score_batch(&self, queries: &EmbeddingMatrix) -> Result<Vec<f64>> {
        let lists = self.query_neighbors(queries, self.k)?;
        Ok(lists.iter().map(|nb| self.score_from_neighbors(nb)).collect())
    }

    /// The `k` nearest reference points of every query row, `k` may exceed
    /// the model's `K` when a sweep needs longer lists.
    pub fn query_neighbors(&self, queries: &EmbeddingMatrix, k: usize) -> Result<Vec<NeighborList>> {
        if k == 0 || k > self.train.n() {
            return Err(OodError::Parameter(format!(
                "k must be in 1..={}, got {k}",
                self.train.n()
            )));
        }
        let reference = self.reference();
        queries
            .rows()
            .map(|q| reference.check_query(q))
            .collect::<Result<Vec<f64>>>()
            .map(|norms| {
                (0..queries.n())
                    .into_par_iter()
                    .map(|i| reference.nearest(queries.row(i), norms[i], k, None))
                    .collect()
            })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let to_u32 = |v: usize, what: &str| {
            u32::try_from(v).map_err(|_| OodError::Parameter(format!("{what} exceeds u32")))
        };
        let mut w = Writer::new(LOF_MAGIC, LOF_VERSION);
        w.u8(self.metric.tag());
        w.u8(self.train.is_normalized() as u8);
        w.u32(to_u32(self.k, "k")?);
        w.u32(to_u32(self.train.n(), "n")?);
        w.u32(to_u32(self.train.d(), "d")?);
        w.f64s(self.train.data());
        w.f64s(&self.kdist);
        w.f64s(&self.lrd);
        for nb in &self.neighbors {
            for &i in &nb.indices {
                w.u32(i as u32);
            }
        }
        for nb in &self.neighbors {
            w.f64s(&nb.distances);
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, version) = Reader::open(bytes, LOF_MAGIC, "LOF model")?;
        if version != LOF_VERSION {
            return Err(OodError::Format(format!(
                "LOF model: unsupported version {version}"
            )));
        }
        let metric = Metric::from_tag(r.u8()?)
            .ok_or_else(|| OodError::Format("LOF model: unknown metric tag".into()))?;
        let normalized = r.u8()? != 0;
        let k = r.u32()? as usize;
        let n = r.u32()? as usize;
        let d = r.u32()? as usize;
        let bad = |msg: String| OodError::Format(format!("LOF model: {msg}"));
        if n < 2 || k == 0 || k >= n || d == 0 {
            return Err(bad(format!("invalid header k={k} n={n} d={d}")));
        }
        let data = r.f64s(n * d)?;
        let train = EmbeddingMatrix::new(n, d, data)?.with_normalized_flag(normalized);
        let kdist = r.f64s(n)?;
        let lrd = r.f64s(n)?;
        let mut indices = Vec::with_capacity(n * k);
        for _ in 0..n * k {
            indices.push(r.u32()? as usize);
        }
        let distances = r.f64s(n * k)?;
        r.expect_end()?;

        let mut neighbors = Vec::with_capacity(n);
        for i in 0..n {
            let nb = NeighborList {
                indices: indices[i * k..(i + 1) * k].to_vec(),
                distances: distances[i * k..(i + 1) * k].to_vec(),
            };
            if nb.indices.iter().any(|&j| j >= n || j == i) {
                return Err(bad(format!("neighbor list {i} has an invalid index")));
            }
            if nb.distances.windows(2).any(|w| w[0] > w[1]) || nb.kth_distance() != kdist[i] {
                return Err(bad(format!("neighbor list {i} is inconsistent with kdist")));
            }
            if !(lrd[i].is_finite() && lrd[i] > 0.0) {
                return Err(bad(format!("lrd[{i}] = {} is not positive", lrd[i])));
            }
            neighbors.push(nb);
        }
        let sq_norms = train.rows().map(sq_norm).collect();
        Ok(LofModel {
            train,
            k,
            metric,
            kdist,
            neighbors,
            lrd,
            sq_norms,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

fn local_reachability_density(nb: &NeighborList, kdist: &[f64]) -> f64 {
    let total: f64 = nb
        .indices
        .iter()
        .zip(&nb.distances)
        .map(|(&o, &d)| reach_dist(d, kdist[o]).max(REACH_FLOOR))
        .sum();
    nb.len() as f64 / total
}

pub fn lof_score(query: &[f64], model: &LofModel) -> Result<f64> {
    model.score(query)
}

/// Scores every row of `queries`; element `i` equals `lof_score(queries[i])`.
pub fn lof_score_batch(queries: &EmbeddingMatrix, model: &LofModel) -> Result<Vec<f64>> {
    model.score_batch(queries)
}

/// Reference neighbor lists computed once at the largest `K` of a sweep; any
/// smaller `K` reuses their prefixes.
#[derive(Debug, Clone)]
pub struct LofSweepCache {
    train: EmbeddingMatrix,
    metric: Metric,
    k_max: usize,
    neighbors: Vec<NeighborList>,
    sq_norms: Vec<f64>,
}

impl LofSweepCache {
    pub fn new(train: &EmbeddingMatrix, metric: Metric, k_max: usize) -> Result<Self> {
        check_fit_params(train, k_max)?;
        let reference = Reference::new(train, metric)?;
        if reference.is_degenerate() {
            return Err(OodError::Degenerate(
                "all reference points coincide under the metric".into(),
            ));
        }
        let neighbors = reference.self_neighbors(k_max);
        Ok(LofSweepCache {
            train: train.clone(),
            metric,
            k_max,
            neighbors,
            sq_norms: reference.sq_norms.into_owned(),
        })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// The model `fit_lof(train, k, metric)` would return.
    pub fn model(&self, k: usize) -> Result<LofModel> {
        if k == 0 || k > self.k_max {
            return Err(OodError::Parameter(format!(
                "k must be in 1..={}, got {k}",
                self.k_max
            )));
        }
        let neighbors = self.neighbors.iter().map(|nb| nb.truncated(k)).collect();
        Ok(LofModel::assemble(
            self.train.clone(),
            k,
            self.metric,
            neighbors,
            self.sq_norms.clone(),
        ))
    }
}
