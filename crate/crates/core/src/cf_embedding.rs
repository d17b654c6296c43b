//! Joint user/song embedding space learned from implicit feedback.
//!
//! Weighted matrix factorisation with confidence `1 + alpha * weight` and
//! binary preference `weight > 0`, fitted by alternating least squares. Each
//! half-step solves every row's regularised normal equations exactly, so the
//! objective
//!
//! ```text
//! L = sum_{u,i} c_ui (p_ui - x_u . y_i)^2 + lambda (sum |x_u|^2 + sum |y_i|^2)
//! ```
//!
//! cannot increase from one epoch to the next.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, InteractionEvent};
use crate::scalar::{cholesky_solve, dot, Scalar};
use crate::snapshot::{self, SnapshotError};

const SNAPSHOT_KIND: &str = "embedding_space";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub dimension: usize,
    pub epochs: usize,
    pub regularization: f64,
    /// Confidence scaling `alpha` in `1 + alpha * weight`.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            dimension: 64,
            epochs: 15,
            regularization: 0.01,
            alpha: 40.0,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("no interaction events to train on")]
    NoEvents,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("event references user {0:?} which is not in the catalog")]
    UnknownUserInEvents(String),
    #[error("event references song {0:?} which is not in the catalog")]
    UnknownSongInEvents(String),
    #[error("no vector for user {0:?}")]
    UnknownUser(String),
    #[error("no vector for song {0:?}")]
    UnknownSong(String),
    #[error("least-squares system for {side} row {row} is not positive definite")]
    Singular { side: &'static str, row: usize },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

/// Row-major table of equally sized vectors keyed by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "FactorsRepr<T>", into = "FactorsRepr<T>")]
#[serde(bound = "T: Scalar")]
pub struct Factors<T> {
    ids: Vec<String>,
    dimension: usize,
    data: Vec<T>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct FactorsRepr<T> {
    ids: Vec<String>,
    dimension: usize,
    data: Vec<T>,
}

impl<T: Scalar> From<FactorsRepr<T>> for Factors<T> {
    fn from(r: FactorsRepr<T>) -> Self {
        Factors::new(r.ids, r.dimension, r.data)
    }
}

impl<T: Scalar> From<Factors<T>> for FactorsRepr<T> {
    fn from(f: Factors<T>) -> Self {
        FactorsRepr {
            ids: f.ids,
            dimension: f.dimension,
            data: f.data,
        }
    }
}

impl<T: Scalar> Factors<T> {
    pub fn new(ids: Vec<String>, dimension: usize, data: Vec<T>) -> Self {
        assert_eq!(ids.len() * dimension, data.len(), "factor table shape");
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Factors {
            ids,
            dimension,
            data,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[T]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.ids.iter().enumerate().map(move |(i, id)| (id.as_str(), self.row(i)))
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EmbeddingSpace<T> {
    pub dimension: usize,
    pub users: Factors<T>,
    pub songs: Factors<T>,
    pub config: TrainingConfig,
    pub seed: u64,
    pub model_version: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingReport {
    /// Objective at initialisation followed by one value per epoch.
    pub objective_history: Vec<f64>,
    pub warnings: Vec<String>,
}

impl<T: Scalar> EmbeddingSpace<T> {
    pub fn user_vector(&self, user_id: &str) -> Option<&[T]> {
        self.users.get(user_id)
    }

    pub fn song_vector(&self, song_id: &str) -> Option<&[T]> {
        self.songs.get(song_id)
    }

    /// Inner product of the user and song vectors.
    pub fn affinity(&self, user_id: &str, song_id: &str) -> Result<T, EmbeddingError> {
        let u = self
            .user_vector(user_id)
            .ok_or_else(|| EmbeddingError::UnknownUser(user_id.to_string()))?;
        let s = self
            .song_vector(song_id)
            .ok_or_else(|| EmbeddingError::UnknownSong(song_id.to_string()))?;
        Ok(dot(u, s))
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        Ok(snapshot::save(path, SNAPSHOT_KIND, self)?)
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        Ok(snapshot::load(path, SNAPSHOT_KIND)?)
    }
}

pub fn affinity<T: Scalar>(space: &EmbeddingSpace<T>, user_id: &str, song_id: &str) -> Result<T, EmbeddingError> {
    space.affinity(user_id, song_id)
}

/// Sparse confidence/preference matrix over the users and songs seen in the
/// events. Ids are sorted so row order does not depend on event order.
#[derive(Debug, Clone)]
pub struct ImplicitMatrix<T> {
    pub user_ids: Vec<String>,
    pub song_ids: Vec<String>,
    /// Per user: (song row, confidence, preference).
    pub by_user: Vec<Vec<(usize, T, T)>>,
    /// Per song: (user row, confidence, preference).
    pub by_song: Vec<Vec<(usize, T, T)>>,
}

impl<T: Scalar> ImplicitMatrix<T> {
    /// Repeated (user, song) events accumulate their weights.
    pub fn from_events(events: &[InteractionEvent], alpha: f64) -> Self {
        let mut totals: BTreeMap<(&str, &str), f64> = BTreeMap::new();
        for e in events {
            *totals.entry((e.user_id.as_str(), e.song_id.as_str())).or_insert(0.0) += e.weight;
        }
        let mut user_ids: Vec<String> = events.iter().map(|e| e.user_id.clone()).collect();
        user_ids.sort();
        user_ids.dedup();
        let mut song_ids: Vec<String> = events.iter().map(|e| e.song_id.clone()).collect();
        song_ids.sort();
        song_ids.dedup();
        let u_pos: HashMap<&str, usize> = user_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let s_pos: HashMap<&str, usize> = song_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut by_user = vec![Vec::new(); user_ids.len()];
        let mut by_song = vec![Vec::new(); song_ids.len()];
        for ((u, s), w) in totals {
            let (ui, si) = (u_pos[u], s_pos[s]);
            let conf = T::of(1.0 + alpha * w);
            let pref = if w > 0.0 { T::one() } else { T::zero() };
            by_user[ui].push((si, conf, pref));
            by_song[si].push((ui, conf, pref));
        }
        ImplicitMatrix {
            user_ids,
            song_ids,
            by_user,
            by_song,
        }
    }
}

fn gram<T: Scalar>(data: &[T], d: usize) -> Vec<T> {
    let mut g = vec![T::zero(); d * d];
    for row in data.chunks_exact(d) {
        for a in 0..d {
            let ra = row[a];
            for b in a..d {
                g[a * d + b] = g[a * d + b] + ra * row[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            g[a * d + b] = g[b * d + a];
        }
    }
    g
}

/// Exact least-squares update of every row of `target` given `fixed`.
fn solve_side<T: Scalar>(
    target: &mut [T],
    fixed: &[T],
    rows: &[Vec<(usize, T, T)>],
    d: usize,
    lambda: T,
    side: &'static str,
) -> Result<(), EmbeddingError> {
    let g = gram(fixed, d);
    target
        .par_chunks_mut(d)
        .zip(rows.par_iter())
        .enumerate()
        .try_for_each(|(row_idx, (x, obs))| {
            let mut a = g.clone();
            let mut b = vec![T::zero(); d];
            for &(j, c, p) in obs {
                let y = &fixed[j * d..(j + 1) * d];
                let extra = c - T::one();
                for r in 0..d {
                    let yr = y[r];
                    for s in r..d {
                        a[r * d + s] = a[r * d + s] + extra * yr * y[s];
                    }
                    b[r] = b[r] + c * p * yr;
                }
            }
            for r in 0..d {
                for s in 0..r {
                    a[r * d + s] = a[s * d + r];
                }
                a[r * d + r] = a[r * d + r] + lambda;
            }
            cholesky_solve(&mut a, &mut b, d).ok_or(EmbeddingError::Singular { side, row: row_idx })?;
            x.copy_from_slice(&b);
            Ok(())
        })
}

/// Full weighted objective, evaluated in `f64`.
///
/// Uses `sum_{all u,i} s^2 = sum_u x_u^T (Y^T Y) x_u` so the cost is linear in
/// the number of observed cells.
pub fn objective<T: Scalar>(
    matrix: &ImplicitMatrix<T>,
    users: &[T],
    songs: &[T],
    d: usize,
    lambda: f64,
) -> f64 {
    let to64 = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
    let (xu, ys) = (to64(users), to64(songs));
    let g = gram(&ys, d);
    let mut total = 0.0;
    for (u, obs) in matrix.by_user.iter().enumerate() {
        let x = &xu[u * d..(u + 1) * d];
        let mut quad = 0.0;
        for a in 0..d {
            quad += x[a] * dot(&g[a * d..(a + 1) * d], x);
        }
        total += quad;
        for &(i, c, p) in obs {
            let s = dot(x, &ys[i * d..(i + 1) * d]);
            let (c, p) = (c.to_f64_lossy(), p.to_f64_lossy());
            total += c * (p - s) * (p - s) - s * s;
        }
    }
    total + lambda * (dot(&xu, &xu) + dot(&ys, &ys))
}

/// Analytic gradient of [`objective`] with respect to both factor tables.
pub fn objective_gradient<T: Scalar>(
    matrix: &ImplicitMatrix<T>,
    users: &[T],
    songs: &[T],
    d: usize,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let to64 = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
    let (xu, ys) = (to64(users), to64(songs));
    let n_users = matrix.user_ids.len();
    let n_songs = matrix.song_ids.len();
    let mut gu = vec![0.0; xu.len()];
    let mut gs = vec![0.0; ys.len()];
    let mut observed: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
    for (u, obs) in matrix.by_user.iter().enumerate() {
        for &(i, c, p) in obs {
            observed.insert((u, i), (c.to_f64_lossy(), p.to_f64_lossy()));
        }
    }
    for u in 0..n_users {
        let x = &xu[u * d..(u + 1) * d];
        for i in 0..n_songs {
            let y = &ys[i * d..(i + 1) * d];
            let (c, p) = observed.get(&(u, i)).copied().unwrap_or((1.0, 0.0));
            let r = -2.0 * c * (p - dot(x, y));
            for k in 0..d {
                gu[u * d + k] += r * y[k];
                gs[i * d + k] += r * x[k];
            }
        }
    }
    for (g, x) in gu.iter_mut().zip(&xu) {
        *g += 2.0 * lambda * x;
    }
    for (g, y) in gs.iter_mut().zip(&ys) {
        *g += 2.0 * lambda * y;
    }
    (gu, gs)
}

pub fn train_embeddings<T: Scalar>(
    events: &[InteractionEvent],
    catalog: &Catalog,
    config: &TrainingConfig,
) -> Result<(EmbeddingSpace<T>, TrainingReport), EmbeddingError> {
    if events.is_empty() {
        return Err(EmbeddingError::NoEvents);
    }
    if config.dimension == 0 || config.epochs == 0 {
        return Err(EmbeddingError::Config("dimension and epochs must be at least 1".into()));
    }
    if !(config.regularization >= 0.0) || !(config.alpha >= 0.0) {
        return Err(EmbeddingError::Config("regularization and alpha must be non-negative".into()));
    }
    for e in events {
        if catalog.user(&e.user_id).is_none() {
            return Err(EmbeddingError::UnknownUserInEvents(e.user_id.clone()));
        }
        if catalog.song(&e.song_id).is_none() {
            return Err(EmbeddingError::UnknownSongInEvents(e.song_id.clone()));
        }
    }

    let d = config.dimension;
    let matrix = ImplicitMatrix::<T>::from_events(events, config.alpha);
    let mut report = TrainingReport::default();
    if d > matrix.song_ids.len() {
        report.warnings.push(format!(
            "dimension {d} exceeds the number of distinct songs ({})",
            matrix.song_ids.len()
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 0.5 / (d as f64).sqrt();
    let mut init = |n: usize| -> Vec<T> {
        (0..n * d).map(|_| T::of(rng.random_range(-bound..=bound))).collect()
    };
    let mut users = init(matrix.user_ids.len());
    let mut songs = init(matrix.song_ids.len());
    let lambda = T::of(config.regularization);

    report
        .objective_history
        .push(objective(&matrix, &users, &songs, d, config.regularization));
    for _ in 0..config.epochs {
        solve_side(&mut users, &songs, &matrix.by_user, d, lambda, "user")?;
        solve_side(&mut songs, &users, &matrix.by_song, d, lambda, "song")?;
        report
            .objective_history
            .push(objective(&matrix, &users, &songs, d, config.regularization));
    }

    let space = EmbeddingSpace {
        dimension: d,
        users: Factors::new(matrix.user_ids, d, users),
        songs: Factors::new(matrix.song_ids, d, songs),
        config: config.clone(),
        seed: config.seed,
        model_version: String::from("unversioned"),
    };
    Ok((space, report))
}
