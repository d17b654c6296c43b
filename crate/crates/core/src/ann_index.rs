//! Inverted-file index for maximum inner product retrieval.
//!
//! A coarse k-means quantizer partitions the song vectors into cells; a
//! query scans only the posting lists of the `n_probe` cells whose centroids
//! are closest (Euclidean) to the query and ranks candidates by inner
//! product. Probing every cell degenerates to [`exact_topk`].

use std::cmp::Ordering;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scalar::{dot, squared_l2, Scalar};
use crate::snapshot::{self, SnapshotError};

const SNAPSHOT_KIND: &str = "ann_index";
pub const KMEANS_ITERATIONS: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum AnnError {
    #[error("cannot build an index over zero vectors")]
    Empty,
    #[error("vector {id:?} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("query has dimension {found}, index has {expected}")]
    QueryDimension { expected: usize, found: usize },
    #[error("{0} must be at least 1")]
    ZeroParameter(&'static str),
    #[error("recall needs at least one query")]
    NoQueries,
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    /// Defaults to `ceil(sqrt(N))`.
    pub n_cells: Option<usize>,
    pub seed: u64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig { n_cells: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Neighbor<T> {
    pub song_id: String,
    pub similarity: T,
}

/// Descending similarity; ties broken by ascending song id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NeighborList<T>(pub Vec<Neighbor<T>>);

impl<T> NeighborList<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Neighbor<T>> {
        self.0.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|n| n.song_id.as_str())
    }
}

fn rank_order<T: Scalar>(a: (&str, T), b: (&str, T)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or_else(|| a.1.is_nan().cmp(&b.1.is_nan()))
        .then_with(|| a.0.cmp(b.0))
}

/// Keeps the best `k` of `(id, similarity)` pairs in rank order.
fn top_k<'a, T: Scalar>(mut scored: Vec<(&'a str, T)>, k: usize) -> NeighborList<T> {
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, |a, b| rank_order(*a, *b));
        scored.truncate(k);
    }
    scored.sort_unstable_by(|a, b| rank_order(*a, *b));
    NeighborList(
        scored
            .into_iter()
            .map(|(id, s)| Neighbor {
                song_id: id.to_string(),
                similarity: s,
            })
            .collect(),
    )
}

/// Exhaustive inner-product scan.
pub fn exact_topk<'a, T, I>(items: I, query: &[T], k: usize) -> Result<NeighborList<T>, AnnError>
where
    T: Scalar,
    I: IntoIterator<Item = (&'a str, &'a [T])>,
{
    if k == 0 {
        return Err(AnnError::ZeroParameter("k"));
    }
    let mut scored = Vec::new();
    for (id, v) in items {
        if v.len() != query.len() {
            return Err(AnnError::QueryDimension {
                expected: v.len(),
                found: query.len(),
            });
        }
        scored.push((id, dot(v, query)));
    }
    Ok(top_k(scored, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AnnIndex<T> {
    dimension: usize,
    item_ids: Vec<String>,
    vectors: Vec<T>,
    centroids: Vec<T>,
    postings: Vec<Vec<u32>>,
    pub config: IndexConfig,
    pub model_version: String,
}

fn nearest_centroid<T: Scalar>(v: &[T], centroids: &[T], d: usize) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (c, cent) in centroids.chunks_exact(d).enumerate() {
        let dist = squared_l2(v, cent);
        if dist < best_d {
            best_d = dist;
            best = c;
        }
    }
    best
}

fn assign<T: Scalar>(vectors: &[T], centroids: &[T], d: usize) -> Vec<usize> {
    vectors
        .par_chunks_exact(d)
        .map(|v| nearest_centroid(v, centroids, d))
        .collect()
}

/// Lloyd's k-means with a fixed iteration count. Empty cells are repaired by
/// splitting the most populated cell into two slightly perturbed copies.
fn kmeans<T: Scalar>(vectors: &[T], d: usize, k: usize, iterations: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let n = vectors.len() / d;
    let mut seeds = sample(rng, n, k).into_vec();
    seeds.sort_unstable();
    let mut centroids: Vec<T> = seeds
        .iter()
        .flat_map(|&i| vectors[i * d..(i + 1) * d].iter().copied())
        .collect();
    let eps = T::of(1.0 / 1024.0);
    for _ in 0..iterations {
        let labels = assign(vectors, &centroids, d);
        let mut sums = vec![T::zero(); k * d];
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for j in 0..d {
                sums[c * d + j] = sums[c * d + j] + vectors[i * d + j];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = T::one() / T::of(counts[c] as f64);
                for j in 0..d {
                    centroids[c * d + j] = sums[c * d + j] * inv;
                }
            }
        }
        for c in 0..k {
            if counts[c] != 0 {
                continue;
            }
            let big = (0..k).max_by_key(|&x| (counts[x], std::cmp::Reverse(x))).unwrap_or(0);
            if counts[big] < 2 {
                continue;
            }
            for j in 0..d {
                let sign = if rng.random_bool(0.5) { T::one() } else { -T::one() };
                let base = centroids[big * d + j];
                let delta = (base.abs() + eps) * eps * sign;
                centroids[c * d + j] = base + delta;
                centroids[big * d + j] = base - delta;
            }
            counts[c] = counts[big] / 2;
            counts[big] -= counts[c];
        }
    }
    centroids
}

impl<T: Scalar> AnnIndex<T> {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }

    pub fn n_cells(&self) -> usize {
        self.postings.len()
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn postings(&self) -> &[Vec<u32>] {
        &self.postings
    }

    pub fn centroid(&self, cell: usize) -> &[T] {
        &self.centroids[cell * self.dimension..(cell + 1) * self.dimension]
    }

    pub fn vector(&self, item: usize) -> &[T] {
        &self.vectors[item * self.dimension..(item + 1) * self.dimension]
    }

    pub fn items(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.item_ids.iter().enumerate().map(move |(i, id)| (id.as_str(), self.vector(i)))
    }

    /// Cell whose posting list holds `item`.
    pub fn cell_of(&self, item: usize) -> Option<usize> {
        self.postings.iter().position(|p| p.contains(&(item as u32)))
    }

    /// Cells ordered by Euclidean distance of their centroid to `query`.
    pub fn probe_order(&self, query: &[T]) -> Vec<usize> {
        let d = self.dimension;
        let mut cells: Vec<(usize, T)> = self
            .centroids
            .chunks_exact(d)
            .enumerate()
            .map(|(c, cent)| (c, squared_l2(query, cent)))
            .collect();
        cells.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        cells.into_iter().map(|(c, _)| c).collect()
    }

    pub fn query(&self, query: &[T], k: usize, n_probe: usize) -> Result<NeighborList<T>, AnnError> {
        if k == 0 {
            return Err(AnnError::ZeroParameter("k"));
        }
        if n_probe == 0 {
            return Err(AnnError::ZeroParameter("n_probe"));
        }
        if query.len() != self.dimension {
            return Err(AnnError::QueryDimension {
                expected: self.dimension,
                found: query.len(),
            });
        }
        let order = self.probe_order(query);
        let scored: Vec<(&str, T)> = order
            .into_iter()
            .take(n_probe)
            .flat_map(|c| self.postings[c].iter())
            .map(|&i| {
                let i = i as usize;
                (self.item_ids[i].as_str(), dot(self.vector(i), query))
            })
            .collect();
        Ok(top_k(scored, k))
    }

    pub fn exact_topk(&self, query: &[T], k: usize) -> Result<NeighborList<T>, AnnError> {
        if query.len() != self.dimension {
            return Err(AnnError::QueryDimension {
                expected: self.dimension,
                found: query.len(),
            });
        }
        exact_topk(self.items(), query, k)
    }

    pub fn save(&self, path: &Path) -> Result<(), AnnError> {
        Ok(snapshot::save(path, SNAPSHOT_KIND, self)?)
    }

    pub fn load(path: &Path) -> Result<Self, AnnError> {
        Ok(snapshot::load(path, SNAPSHOT_KIND)?)
    }
}

pub fn build_index<'a, T, I>(items: I, config: IndexConfig) -> Result<AnnIndex<T>, AnnError>
where
    T: Scalar,
    I: IntoIterator<Item = (&'a str, &'a [T])>,
{
    let mut item_ids = Vec::new();
    let mut vectors = Vec::new();
    let mut dimension = None;
    for (id, v) in items {
        let d = *dimension.get_or_insert(v.len());
        if v.len() != d || d == 0 {
            return Err(AnnError::DimensionMismatch {
                id: id.to_string(),
                expected: d,
                found: v.len(),
            });
        }
        item_ids.push(id.to_string());
        vectors.extend_from_slice(v);
    }
    let d = dimension.ok_or(AnnError::Empty)?;
    let n = item_ids.len();
    let n_cells = config
        .n_cells
        .unwrap_or_else(|| (n as f64).sqrt().ceil() as usize)
        .clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centroids = kmeans(&vectors, d, n_cells, KMEANS_ITERATIONS, &mut rng);
    let labels = assign(&vectors, &centroids, d);
    let mut postings = vec![Vec::new(); n_cells];
    for (i, c) in labels.into_iter().enumerate() {
        postings[c].push(i as u32);
    }
    Ok(AnnIndex {
        dimension: d,
        item_ids,
        vectors,
        centroids,
        postings,
        config: IndexConfig {
            n_cells: Some(n_cells),
            seed: config.seed,
        },
        model_version: String::from("unversioned"),
    })
}

/// Mean over queries of `|approx ∩ exact| / |exact|`, where `exact` is the
/// true top-`k` (shorter than `k` only when the corpus is).
pub fn recall_at_k<T: Scalar>(
    index: &AnnIndex<T>,
    queries: &[Vec<T>],
    k: usize,
    n_probe: usize,
) -> Result<f64, AnnError> {
    if queries.is_empty() {
        return Err(AnnError::NoQueries);
    }
    let per_query: Vec<f64> = queries
        .par_iter()
        .map(|q| {
            let exact = index.exact_topk(q, k)?;
            let approx = index.query(q, k, n_probe)?;
            let truth: std::collections::HashSet<&str> = exact.ids().collect();
            let hits = approx.ids().filter(|id| truth.contains(id)).count();
            Ok(hits as f64 / exact.len() as f64)
        })
        .collect::<Result<_, AnnError>>()?;
    Ok(per_query.iter().sum::<f64>() / queries.len() as f64)
}
