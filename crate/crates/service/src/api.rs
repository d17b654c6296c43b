//! Request and response bodies of the /v1 API.

use std::collections::BTreeMap;
use std::path::PathBuf;

use flowmoods::session::FeedbackKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoodInfo {
    pub id: String,
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_version: String,
    pub sessions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub song_id: String,
    pub title: String,
    /// Artist display name.
    pub artist: String,
    pub artist_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mood_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRequest {
    pub user_id: String,
    /// One of the six mood ids; `null` or absent starts regular Flow.
    #[serde(default)]
    pub mood: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartResponse {
    pub session_id: String,
    pub track: Track,
    pub fallback_active: bool,
    pub model_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextResponse {
    pub track: Track,
    pub fallback_active: bool,
    pub model_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    /// Client-chosen id; repeating it makes the request a no-op.
    pub event_id: String,
    pub kind: FeedbackKind,
    pub song_id: String,
    #[serde(default)]
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artist_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub user_id: String,
    pub mood: Option<String>,
    pub threshold: f64,
    pub fallback_active: bool,
    pub model_version: String,
    pub current_track: Option<Track>,
    /// Upcoming songs, in queue order.
    pub queue: Vec<Track>,
    pub history: Vec<String>,
    pub artist_weights: BTreeMap<String, f64>,
    pub excluded_songs: Vec<String>,
    pub excluded_artists: Vec<String>,
    pub barred_songs: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReloadRequest {
    #[serde(default)]
    pub snapshot_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReloadResponse {
    pub model_version: String,
}
