//! End-to-end artifact production and the snapshot directory layout.
//!
//! A snapshot directory holds one complete, version-consistent artifact set:
//!
//! | file              | content                                  |
//! |-------------------|------------------------------------------|
//! | `catalog.jsonl`   | songs, artists, users                    |
//! | `embeddings.json` | user/song embedding space                |
//! | `forests.json`    | the six mood forests and their holdout   |
//! | `scores.csv`      | mood score table                         |
//! | `index.json`      | inverted-file index over song vectors    |
//! | `fallback.json`   | fallback pools per mood                  |
//!
//! Every artifact except the catalog carries a `model_version` stamp and a
//! directory only loads when all stamps agree.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann_index::{build_index, AnnError, IndexConfig};
use crate::catalog::{load_catalog, Catalog, CatalogError, InteractionEvent, MoodLabel};
use crate::cf_embedding::{train_embeddings, EmbeddingError, TrainingConfig, TrainingReport};
use crate::mood::{Mood, MoodMap};
use crate::mood_classifier::{
    evaluate, labeled_examples, score_catalog, split_holdout, train_forest, ClassifierError, EvalMetrics,
    ForestConfig, ScoreReport,
};
use crate::session::{build_fallback_pools, FallbackPool, SessionConfig, SessionDeps, SessionError};
use crate::simulator::popularity;
use crate::{AnnIndex, EmbeddingSpace, MoodModels, MoodScoreTable, Real};

pub const CATALOG_FILE: &str = "catalog.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.json";
pub const FORESTS_FILE: &str = "forests.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const INDEX_FILE: &str = "index.json";
pub const FALLBACK_FILE: &str = "fallback.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Index(#[from] AnnError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("snapshot {dir} is incomplete: missing {file}")]
    Incomplete { dir: PathBuf, file: &'static str },
    #[error("inconsistent model versions: {first_artifact} is {first:?} but {second_artifact} is {second:?}")]
    VersionMismatch {
        first_artifact: &'static str,
        first: String,
        second_artifact: &'static str,
        second: String,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub model_version: String,
    pub embedding: TrainingConfig,
    pub forest: ForestConfig,
    pub holdout_fraction: Real,
    pub index: IndexConfig,
    pub fallback_size: usize,
    pub session: SessionConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model_version: "v1".into(),
            embedding: TrainingConfig::default(),
            forest: ForestConfig::default(),
            holdout_fraction: 0.2,
            index: IndexConfig::default(),
            fallback_size: 200,
            session: SessionConfig::default(),
            seed: 7,
        }
    }
}

/// Seed of the forest for `mood`, derived from the pipeline seed.
pub fn forest_seed(seed: u64, mood: Mood) -> u64 {
    seed ^ (mood.index() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains one forest per mood on all labels except a seeded holdout.
pub fn train_mood_models(
    catalog: &Catalog,
    labels: &[MoodLabel],
    config: &ForestConfig,
    holdout_fraction: Real,
    seed: u64,
    model_version: &str,
) -> Result<MoodModels, ClassifierError> {
    let trained: Vec<_> = Mood::ALL
        .par_iter()
        .map(|&mood| {
            let examples = labeled_examples::<Real>(catalog, labels, mood);
            let (train, holdout) = split_holdout(&examples, holdout_fraction, forest_seed(seed, mood));
            let data: Vec<(Vec<Real>, crate::Label)> = train.into_iter().map(|(_, x, l)| (x, l)).collect();
            let forest = train_forest(&data, mood, config, forest_seed(seed, mood))?;
            Ok((forest, holdout.into_iter().map(|(id, _, _)| id).collect::<Vec<_>>()))
        })
        .collect::<Result<_, ClassifierError>>()?;
    let mut holdout = BTreeMap::new();
    let mut forests = Vec::new();
    for (forest, ids) in trained {
        holdout.insert(forest.mood, ids);
        forests.push(forest);
    }
    Ok(MoodModels {
        model_version: model_version.to_string(),
        forests,
        holdout,
    })
}

/// Holdout metrics per mood, using the holdout ids stored with the models.
pub fn evaluate_models(
    models: &MoodModels,
    catalog: &Catalog,
    labels: &[MoodLabel],
) -> Result<MoodMap<EvalMetrics>, ClassifierError> {
    let mut out = Vec::with_capacity(Mood::COUNT);
    for mood in Mood::ALL {
        let forest = models.forest(mood).ok_or(ClassifierError::MissingForest(mood))?;
        let held: std::collections::HashSet<&str> = models
            .holdout
            .get(&mood)
            .map(|v| v.iter().map(String::as_str).collect())
            .unwrap_or_default();
        let holdout: Vec<(Vec<Real>, crate::Label)> = labeled_examples::<Real>(catalog, labels, mood)
            .into_iter()
            .filter(|(id, _, _)| held.contains(id.as_str()))
            .map(|(_, x, l)| (x, l))
            .collect();
        out.push(evaluate(forest, &holdout)?);
    }
    Ok(MoodMap(out.try_into().expect("six moods")))
}

/// One complete, mutually consistent set of model artifacts.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub catalog: Arc<Catalog>,
    pub space: Arc<EmbeddingSpace>,
    pub models: Arc<MoodModels>,
    pub scores: Arc<MoodScoreTable>,
    pub index: Arc<AnnIndex>,
    pub fallback: Arc<FallbackPool>,
}

#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    pub training: TrainingReport,
    pub scoring: ScoreReport,
}

pub fn build_index_for(space: &EmbeddingSpace, config: IndexConfig, model_version: &str) -> Result<AnnIndex, AnnError> {
    let mut index = build_index(space.songs.iter(), config)?;
    index.model_version = model_version.to_string();
    Ok(index)
}

pub fn build_artifacts(
    catalog: Catalog,
    events: &[InteractionEvent],
    labels: &[MoodLabel],
    config: &PipelineConfig,
) -> Result<(Artifacts, BuildReport), PipelineError> {
    let version = config.model_version.as_str();
    let (mut space, training) = train_embeddings::<Real>(events, &catalog, &config.embedding)?;
    space.model_version = version.to_string();
    let models = train_mood_models(
        &catalog,
        labels,
        &config.forest,
        config.holdout_fraction,
        config.seed,
        version,
    )?;
    let (scores, scoring) = score_catalog(&models.forests, &catalog, version)?;
    let index = build_index_for(&space, config.index, version)?;
    let fallback = build_fallback_pools(
        &scores,
        &popularity(events),
        config.fallback_size,
        &config.session.thresholds,
    )?;
    Ok((
        Artifacts {
            catalog: Arc::new(catalog),
            space: Arc::new(space),
            models: Arc::new(models),
            scores: Arc::new(scores),
            index: Arc::new(index),
            fallback: Arc::new(fallback),
        },
        BuildReport { training, scoring },
    ))
}

impl Artifacts {
    pub fn model_version(&self) -> &str {
        &self.scores.model_version
    }

    pub fn deps(&self, config: SessionConfig) -> SessionDeps {
        SessionDeps {
            catalog: self.catalog.clone(),
            space: self.space.clone(),
            index: self.index.clone(),
            scores: self.scores.clone(),
            fallback: self.fallback.clone(),
            config,
        }
    }

    pub fn check_versions(&self) -> Result<(), PipelineError> {
        check_versions(&[
            ("score table", &self.scores.model_version),
            ("forests", &self.models.model_version),
            ("embedding space", &self.space.model_version),
            ("index", &self.index.model_version),
            ("fallback pool", &self.fallback.model_version),
        ])
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        self.catalog.write_jsonl(&dir.join(CATALOG_FILE))?;
        self.space.save(&dir.join(EMBEDDINGS_FILE))?;
        self.models.save(&dir.join(FORESTS_FILE))?;
        let scores_path = dir.join(SCORES_FILE);
        self.scores
            .write_csv(&scores_path)
            .map_err(|source| PipelineError::Io { path: scores_path, source })?;
        self.index.save(&dir.join(INDEX_FILE))?;
        self.fallback.save(&dir.join(FALLBACK_FILE))?;
        Ok(())
    }

    /// Loads a snapshot directory; fails unless every file is present and
    /// all version stamps agree.
    pub fn load_dir(dir: &Path) -> Result<Self, PipelineError> {
        for file in [
            CATALOG_FILE,
            EMBEDDINGS_FILE,
            FORESTS_FILE,
            SCORES_FILE,
            INDEX_FILE,
            FALLBACK_FILE,
        ] {
            if !dir.join(file).is_file() {
                return Err(PipelineError::Incomplete {
                    dir: dir.to_path_buf(),
                    file,
                });
            }
        }
        let artifacts = Artifacts {
            catalog: Arc::new(load_catalog(&dir.join(CATALOG_FILE))?),
            space: Arc::new(EmbeddingSpace::load(&dir.join(EMBEDDINGS_FILE))?),
            models: Arc::new(MoodModels::load(&dir.join(FORESTS_FILE))?),
            scores: Arc::new(MoodScoreTable::read_csv(&dir.join(SCORES_FILE))?),
            index: Arc::new(AnnIndex::load(&dir.join(INDEX_FILE))?),
            fallback: Arc::new(FallbackPool::load(&dir.join(FALLBACK_FILE))?),
        };
        artifacts.check_versions()?;
        Ok(artifacts)
    }
}

pub fn check_versions(stamps: &[(&'static str, &str)]) -> Result<(), PipelineError> {
    if let Some((first_artifact, first)) = stamps.first() {
        for (artifact, v) in &stamps[1..] {
            if v != first {
                return Err(PipelineError::VersionMismatch {
                    first_artifact,
                    first: first.to_string(),
                    second_artifact: artifact,
                    second: v.to_string(),
                });
            }
        }
    }
    Ok(())
}
