//! Per-mood random forests over audio embeddings and catalog-wide scoring.
//!
//! Each forest is a set of CART trees grown on bootstrap resamples with Gini
//! impurity splits over a random feature subset per node. A tree's leaf
//! carries the fraction of positive training samples that reached it and
//! the forest score is the mean of those fractions over all trees.
//!
//! Tree `t` draws its bootstrap sample and feature subsets from ChaCha8
//! seeded with the forest seed on stream `t`, so trees can be grown in any
//! order (and in parallel) with identical results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Label, MoodLabel};
use crate::mood::{Mood, MoodMap};
use crate::scalar::Scalar;
use crate::snapshot::{self, SnapshotError};

const SNAPSHOT_KIND: &str = "mood_forests";

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("training set for {mood} has only {class} examples")]
    SingleClass { mood: Mood, class: &'static str },
    #[error("empty training set for {0}")]
    EmptyTrainingSet(Mood),
    #[error("example {index} has dimension {found}, expected {expected}")]
    InconsistentDimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("embedding has dimension {found}, forest expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid forest config: {0}")]
    Config(String),
    #[error("no forest for mood {0}")]
    MissingForest(Mood),
    #[error("holdout must contain both classes")]
    SingleClassHoldout,
    #[error("score file {path}: {message}")]
    ScoreFile { path: PathBuf, message: String },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; defaults to `ceil(sqrt(n_features))`.
    pub feature_subsample: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 12,
            min_leaf: 2,
            feature_subsample: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub enum Node<T> {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        positive_fraction: T,
        sample_count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DecisionTree<T> {
    pub nodes: Vec<Node<T>>,
    pub max_depth: usize,
}

impl<T: Scalar> DecisionTree<T> {
    /// Leaf fraction reached by `x`. The root is node 0.
    pub fn leaf_fraction(&self, x: &[T]) -> T {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { positive_fraction, .. } => return *positive_fraction,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n_positive: usize,
    pub n_negative: usize,
    /// Out-of-bag accuracy at threshold 0.5, when bootstrapping.
    pub oob_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RandomForest<T> {
    pub mood: Mood,
    pub trees: Vec<DecisionTree<T>>,
    pub n_trees: usize,
    pub n_features: usize,
    pub feature_subsample: usize,
    pub seed: u64,
    pub config: ForestConfig,
    pub training_summary: TrainingSummary,
}

struct Grower<'a, T> {
    x: &'a [Vec<T>],
    y: &'a [bool],
    n_features: usize,
    mtry: usize,
    config: &'a ForestConfig,
    rng: ChaCha8Rng,
    nodes: Vec<Node<T>>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

/// Best `(feature, threshold, gain)` over the given features, scanning
/// features in ascending order and thresholds ascending; only a strictly
/// larger gain replaces the incumbent.
pub(crate) fn best_split<T: Scalar>(
    x: &[Vec<T>],
    y: &[bool],
    samples: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<(usize, T, f64)> {
    let n = samples.len();
    let pos_total = samples.iter().filter(|&&i| y[i]).count();
    let parent = gini(pos_total, n);
    let mut best: Option<(usize, T, f64)> = None;
    let mut column: Vec<(T, bool)> = Vec::with_capacity(n);
    for &f in features {
        column.clear();
        column.extend(samples.iter().map(|&i| (x[i][f], y[i])));
        column.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut left_pos = 0;
        for i in 0..n - 1 {
            if column[i].1 {
                left_pos += 1;
            }
            let left_n = i + 1;
            if column[i].0 == column[i + 1].0 || left_n < min_leaf || n - left_n < min_leaf {
                continue;
            }
            let right_n = n - left_n;
            let child = (left_n as f64 * gini(left_pos, left_n)
                + right_n as f64 * gini(pos_total - left_pos, right_n))
                / n as f64;
            let gain = parent - child;
            if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.2) {
                let (lo, hi) = (column[i].0, column[i + 1].0);
                let mut thr = (lo + hi) / T::of(2.0);
                if !(thr >= lo && thr < hi) {
                    thr = lo;
                }
                best = Some((f, thr, gain));
            }
        }
    }
    best
}

impl<T: Scalar> Grower<'_, T> {
    fn leaf(&mut self, samples: &[usize]) -> usize {
        let pos = samples.iter().filter(|&&i| self.y[i]).count();
        self.nodes.push(Node::Leaf {
            positive_fraction: T::of(pos as f64 / samples.len() as f64),
            sample_count: samples.len(),
        });
        self.nodes.len() - 1
    }

    fn grow(&mut self, samples: &[usize], depth: usize) -> usize {
        let pos = samples.iter().filter(|&&i| self.y[i]).count();
        if depth >= self.config.max_depth
            || pos == 0
            || pos == samples.len()
            || samples.len() < 2 * self.config.min_leaf.max(1)
        {
            return self.leaf(samples);
        }
        let mut features = sample(&mut self.rng, self.n_features, self.mtry).into_vec();
        features.sort_unstable();
        let Some((feature, threshold, _)) =
            best_split(self.x, self.y, samples, &features, self.config.min_leaf.max(1))
        else {
            return self.leaf(samples);
        };
        let (left_s, right_s): (Vec<usize>, Vec<usize>) =
            samples.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Split {
            feature,
            threshold,
            left: 0,
            right: 0,
        });
        let left = self.grow(&left_s, depth + 1);
        let right = self.grow(&right_s, depth + 1);
        if let Node::Split { left: l, right: r, .. } = &mut self.nodes[id] {
            *l = left;
            *r = right;
        }
        id
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

pub fn train_forest<T: Scalar>(
    labeled: &[(Vec<T>, Label)],
    mood: Mood,
    config: &ForestConfig,
    seed: u64,
) -> Result<RandomForest<T>, ClassifierError> {
    if labeled.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet(mood));
    }
    if config.n_trees == 0 || config.max_depth == 0 {
        return Err(ClassifierError::Config("n_trees and max_depth must be at least 1".into()));
    }
    let n_features = labeled[0].0.len();
    for (i, (x, _)) in labeled.iter().enumerate() {
        if x.len() != n_features {
            return Err(ClassifierError::InconsistentDimension {
                index: i,
                expected: n_features,
                found: x.len(),
            });
        }
    }
    let y: Vec<bool> = labeled.iter().map(|(_, l)| l.is_positive()).collect();
    let n_positive = y.iter().filter(|&&p| p).count();
    let n_negative = y.len() - n_positive;
    if n_positive == 0 {
        return Err(ClassifierError::SingleClass { mood, class: "negative" });
    }
    if n_negative == 0 {
        return Err(ClassifierError::SingleClass { mood, class: "positive" });
    }
    let mtry = config
        .feature_subsample
        .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
        .clamp(1, n_features.max(1));
    // Features are cloned into one contiguous table once.
    let x: Vec<Vec<T>> = labeled.iter().map(|(v, _)| v.clone()).collect();
    let n = x.len();

    let grown: Vec<(DecisionTree<T>, Vec<bool>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let mut in_bag = vec![false; n];
            let samples: Vec<usize> = if config.bootstrap {
                (0..n)
                    .map(|_| {
                        let i = rng.random_range(0..n);
                        in_bag[i] = true;
                        i
                    })
                    .collect()
            } else {
                in_bag.iter_mut().for_each(|b| *b = true);
                (0..n).collect()
            };
            let mut g = Grower {
                x: &x,
                y: &y,
                n_features,
                mtry,
                config,
                rng,
                nodes: Vec::new(),
            };
            g.grow(&samples, 0);
            (
                DecisionTree {
                    nodes: g.nodes,
                    max_depth: config.max_depth,
                },
                in_bag,
            )
        })
        .collect();

    let oob_estimate = config.bootstrap.then(|| {
        let mut correct = 0usize;
        let mut counted = 0usize;
        for i in 0..n {
            let (sum, cnt) = grown
                .iter()
                .filter(|(_, bag)| !bag[i])
                .fold((0.0, 0usize), |(s, c), (tree, _)| {
                    (s + tree.leaf_fraction(&x[i]).to_f64_lossy(), c + 1)
                });
            if cnt > 0 {
                counted += 1;
                if (sum / cnt as f64 >= 0.5) == y[i] {
                    correct += 1;
                }
            }
        }
        if counted == 0 {
            f64::NAN
        } else {
            correct as f64 / counted as f64
        }
    });

    Ok(RandomForest {
        mood,
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        n_trees: config.n_trees,
        n_features,
        feature_subsample: mtry,
        seed,
        config: *config,
        training_summary: TrainingSummary {
            n_positive,
            n_negative,
            oob_estimate: oob_estimate.filter(|v| v.is_finite()),
        },
    })
}

impl<T: Scalar> RandomForest<T> {
    pub fn leaf_fractions(&self, embedding: &[T]) -> Result<Vec<T>, ClassifierError> {
        self.check_dim(embedding)?;
        Ok(self.trees.iter().map(|t| t.leaf_fraction(embedding)).collect())
    }

    fn check_dim(&self, embedding: &[T]) -> Result<(), ClassifierError> {
        if embedding.len() != self.n_features {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.n_features,
                found: embedding.len(),
            });
        }
        Ok(())
    }

    /// Mean leaf fraction over the trees, in `[0, 1]`.
    pub fn score(&self, embedding: &[T]) -> Result<T, ClassifierError> {
        self.check_dim(embedding)?;
        let sum = self
            .trees
            .iter()
            .fold(T::zero(), |acc, t| acc + t.leaf_fraction(embedding));
        let mean = sum / T::of(self.trees.len() as f64);
        Ok(mean.max(T::zero()).min(T::one()))
    }
}

pub fn score<T: Scalar>(forest: &RandomForest<T>, embedding: &[T]) -> Result<T, ClassifierError> {
    forest.score(embedding)
}

/// The six trained forests plus the version stamp they were produced under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MoodModels<T> {
    pub model_version: String,
    pub forests: Vec<RandomForest<T>>,
    /// Song ids held out from training, per mood.
    #[serde(default)]
    pub holdout: BTreeMap<Mood, Vec<String>>,
}

impl<T: Scalar> MoodModels<T> {
    pub fn forest(&self, mood: Mood) -> Option<&RandomForest<T>> {
        self.forests.iter().find(|f| f.mood == mood)
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        Ok(snapshot::save(path, SNAPSHOT_KIND, self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        Ok(snapshot::load(path, SNAPSHOT_KIND)?)
    }
}

/// Scores for (song, mood). A song may score high for several moods; nothing
/// normalises across moods.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MoodScoreTable<T> {
    pub model_version: String,
    scores: BTreeMap<String, MoodMap<Option<T>>>,
}

impl<T: Scalar> MoodScoreTable<T> {
    pub fn new(model_version: impl Into<String>) -> Self {
        MoodScoreTable {
            model_version: model_version.into(),
            scores: BTreeMap::new(),
        }
    }

    /// Panics if `score` is outside `[0, 1]`.
    pub fn insert(&mut self, song_id: &str, mood: Mood, score: T) {
        assert!(score >= T::zero() && score <= T::one(), "mood score {score} outside [0,1]");
        self.scores
            .entry(song_id.to_string())
            .or_insert_with(|| MoodMap::splat(None))[mood] = Some(score);
    }

    pub fn get(&self, song_id: &str, mood: Mood) -> Option<T> {
        self.scores.get(song_id).and_then(|m| m[mood])
    }

    /// Number of stored (song, mood) scores.
    pub fn len(&self) -> usize {
        self.scores.values().map(|m| m.0.iter().flatten().count()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn songs(&self) -> impl Iterator<Item = &str> {
        self.scores.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Mood, T)> {
        self.scores.iter().flat_map(|(id, m)| {
            m.iter()
                .filter_map(move |(mood, s)| s.map(|s| (id.as_str(), mood, s)))
        })
    }

    /// CSV `song_id,mood,score`, scores to six decimals, preceded by a
    /// `# model_version: ...` comment line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# model_version: {}", self.model_version);
        out.push_str("song_id,mood,score\n");
        for (id, mood, s) in self.iter() {
            let _ = writeln!(out, "{id},{},{}", mood.name(), s.to_f64_lossy());
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_csv().as_bytes())?;
        w.flush()
    }

    pub fn read_csv(path: &Path) -> Result<Self, ClassifierError> {
        let err = |message: String| ClassifierError::ScoreFile {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut table = MoodScoreTable::new("unversioned");
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("model_version:") {
                    table.model_version = v.trim().to_string();
                }
                continue;
            }
            if line == "song_id,mood,score" {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let [song, mood, score] = parts[..] else {
                return Err(err(format!("line {line_no}: expected 3 columns")));
            };
            let mood: Mood = mood.parse().map_err(|e| err(format!("line {line_no}: {e}")))?;
            let score: f64 = score
                .parse()
                .map_err(|_| err(format!("line {line_no}: bad score {score:?}")))?;
            if !(0.0..=1.0).contains(&score) {
                return Err(err(format!("line {line_no}: score {score} outside [0,1]")));
            }
            table.insert(song, mood, T::of(score));
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreReport {
    /// Songs without an audio embedding; they carry no score for any mood.
    pub skipped: Vec<String>,
}

fn embedding_as<T: Scalar>(e: &[f64]) -> Vec<T> {
    e.iter().map(|&v| T::of(v)).collect()
}

pub fn score_catalog<T: Scalar>(
    forests: &[RandomForest<T>],
    catalog: &Catalog,
    model_version: &str,
) -> Result<(MoodScoreTable<T>, ScoreReport), ClassifierError> {
    let by_mood: Vec<&RandomForest<T>> = Mood::ALL
        .iter()
        .map(|&m| {
            forests
                .iter()
                .find(|f| f.mood == m)
                .ok_or(ClassifierError::MissingForest(m))
        })
        .collect::<Result<_, _>>()?;
    let rows: Vec<Option<[T; Mood::COUNT]>> = catalog
        .songs()
        .par_iter()
        .map(|song| {
            song.audio_embedding
                .as_ref()
                .map(|e| {
                    let x = embedding_as::<T>(e);
                    let mut out = [T::zero(); Mood::COUNT];
                    for (slot, f) in out.iter_mut().zip(&by_mood) {
                        *slot = f.score(&x)?;
                    }
                    Ok(out)
                })
                .transpose()
        })
        .collect::<Result<_, ClassifierError>>()?;
    let mut table = MoodScoreTable::new(model_version);
    let mut report = ScoreReport::default();
    for (song, row) in catalog.songs().iter().zip(rows) {
        match row {
            Some(scores) => {
                for (m, s) in Mood::ALL.into_iter().zip(scores) {
                    table.insert(&song.song_id, m, s);
                }
            }
            None => report.skipped.push(song.song_id.clone()),
        }
    }
    Ok((table, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub auc: f64,
    pub accuracy_at_half: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

/// Rank-statistic AUC with tied scores sharing their average rank.
pub fn auc(scored: &[(f64, bool)]) -> Option<f64> {
    let n_pos = scored.iter().filter(|s| s.1).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        // ranks are 1-based: i+1 ..= j+1
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += avg * order[i..=j].iter().filter(|&&k| scored[k].1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

pub fn metrics_from_scores(scored: &[(f64, bool)]) -> Result<EvalMetrics, ClassifierError> {
    let auc = auc(scored).ok_or(ClassifierError::SingleClassHoldout)?;
    let mut m = EvalMetrics {
        auc,
        accuracy_at_half: 0.0,
        true_positive: 0,
        false_positive: 0,
        true_negative: 0,
        false_negative: 0,
    };
    for &(s, y) in scored {
        match (s >= 0.5, y) {
            (true, true) => m.true_positive += 1,
            (true, false) => m.false_positive += 1,
            (false, false) => m.true_negative += 1,
            (false, true) => m.false_negative += 1,
        }
    }
    m.accuracy_at_half = (m.true_positive + m.true_negative) as f64 / scored.len() as f64;
    Ok(m)
}

pub fn evaluate<T: Scalar>(
    forest: &RandomForest<T>,
    holdout: &[(Vec<T>, Label)],
) -> Result<EvalMetrics, ClassifierError> {
    let scored = holdout
        .iter()
        .map(|(x, l)| Ok((forest.score(x)?.to_f64_lossy(), l.is_positive())))
        .collect::<Result<Vec<_>, ClassifierError>>()?;
    metrics_from_scores(&scored)
}

/// `(song_id, embedding, label)` for every labeled song of `mood` that has an
/// audio embedding, in label-file order.
pub fn labeled_examples<T: Scalar>(
    catalog: &Catalog,
    labels: &[MoodLabel],
    mood: Mood,
) -> Vec<(String, Vec<T>, Label)> {
    labels
        .iter()
        .filter(|l| l.mood == mood)
        .filter_map(|l| {
            let e = catalog.song(&l.song_id)?.audio_embedding.as_ref()?;
            Some((l.song_id.clone(), embedding_as(e), l.label))
        })
        .collect()
}

/// Deterministic split: every song lands in the holdout with probability
/// `fraction`, drawn from `seed`.
pub fn split_holdout<E: Clone>(items: &[E], fraction: f64, seed: u64) -> (Vec<E>, Vec<E>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for it in items {
        if rng.random_bool(fraction.clamp(0.0, 1.0)) {
            holdout.push(it.clone());
        } else {
            train.push(it.clone());
        }
    }
    (train, holdout)
}
