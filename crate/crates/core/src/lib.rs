//! Mood-conditioned personalized radio.
//!
//! The pipeline learns a joint user/song embedding space from implicit
//! feedback ([`cf_embedding`]), scores each song against six moods with
//! random forests over audio embeddings ([`mood_classifier`]), retrieves
//! songs near a user with an inverted-file index ([`ann_index`]) and serves
//! endless mood-filtered sessions that adapt to likes, skips and exclusions
//! ([`session`]). [`simulator`] produces synthetic worlds and listening logs.
//!
//! The numeric modules are generic over [`Scalar`]; the aliases below fix
//! them to [`Real`] for the rest of the crate.

pub mod ann_index;
pub mod catalog;
pub mod cf_embedding;
pub mod mood;
pub mod mood_classifier;
pub mod pipeline;
pub mod scalar;
pub mod session;
pub mod simulator;
pub mod snapshot;

pub use catalog::{Catalog, InteractionEvent, Label, MoodLabel, Song, User};
pub use mood::{Mood, MoodMap};
pub use scalar::Scalar;

/// Scalar type used by the service and the command line tools.
pub type Real = f64;

pub type EmbeddingSpace = cf_embedding::EmbeddingSpace<Real>;
pub type AnnIndex = ann_index::AnnIndex<Real>;
pub type NeighborList = ann_index::NeighborList<Real>;
pub type RandomForest = mood_classifier::RandomForest<Real>;
pub type DecisionTree = mood_classifier::DecisionTree<Real>;
pub type MoodModels = mood_classifier::MoodModels<Real>;
pub type MoodScoreTable = mood_classifier::MoodScoreTable<Real>;
