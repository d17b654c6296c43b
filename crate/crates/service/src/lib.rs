//! HTTP+JSON API over the session engine.
//!
//! The loaded artifact set sits behind one `RwLock<Arc<Artifacts>>`; a reload
//! builds the new set completely and then swaps the pointer, so a request sees
//! either the old or the new set. Each live session keeps the `Arc` it was
//! started with, and its own mutex serializes requests to that session.

pub mod api;
mod error;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use flowmoods::pipeline::Artifacts;
use flowmoods::session::{self, FeedbackEvent, SessionConfig, SessionDeps, SessionState};
use flowmoods::Mood;
use serde::de::DeserializeOwned;

pub use api::*;
pub use error::{ApiError, ErrorBody};

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(24 * 3600);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub session: SessionConfig,
    /// Sessions idle for longer are dropped by [`ServiceState::evict_idle`].
    pub idle_timeout: Duration,
    /// Default directory for `POST /v1/admin/reload`.
    pub snapshot_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            session: SessionConfig::default(),
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
            snapshot_dir: None,
        }
    }
}

struct LiveSession {
    state: SessionState,
    artifacts: Arc<Artifacts>,
    deps: SessionDeps,
    /// Responses to feedback already applied, by client event id.
    applied: HashMap<String, FeedbackResponse>,
    last_used: Instant,
}

pub struct ServiceState {
    artifacts: RwLock<Arc<Artifacts>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<LiveSession>>>>,
    config: ServiceConfig,
    counter: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn track_of(artifacts: &Artifacts, mood: Option<Mood>, song_id: &str) -> Track {
    let song = artifacts.catalog.song(song_id);
    let artist_id = song.map(|s| s.artist_id.clone()).unwrap_or_default();
    Track {
        song_id: song_id.to_string(),
        title: song.map(|s| s.title.clone()).unwrap_or_default(),
        artist: artifacts
            .catalog
            .artist(&artist_id)
            .map(|a| a.name.clone())
            .unwrap_or_default(),
        artist_id,
        mood_score: mood.and_then(|m| artifacts.scores.get(song_id, m)),
    }
}

impl ServiceState {
    pub fn new(artifacts: Artifacts, config: ServiceConfig) -> Result<Self, ApiError> {
        artifacts.check_versions()?;
        config.session.validate()?;
        Ok(ServiceState {
            artifacts: RwLock::new(Arc::new(artifacts)),
            sessions: RwLock::new(HashMap::new()),
            config,
            counter: AtomicU64::new(0),
        })
    }

    pub fn from_dir(dir: &Path, mut config: ServiceConfig) -> Result<Self, ApiError> {
        let artifacts = Artifacts::load_dir(dir)?;
        config.snapshot_dir.get_or_insert_with(|| dir.to_path_buf());
        Self::new(artifacts, config)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// The artifact set new sessions start from.
    pub fn artifacts(&self) -> Arc<Artifacts> {
        self.artifacts.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn model_version(&self) -> String {
        self.artifacts().model_version().to_string()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    /// Loads a complete snapshot directory and swaps it in. On any error the
    /// current set stays in place. Live sessions keep their own set.
    pub fn reload_artifacts(&self, dir: &Path) -> Result<String, ApiError> {
        let fresh = Arc::new(Artifacts::load_dir(dir)?);
        let version = fresh.model_version().to_string();
        *self.artifacts.write().unwrap_or_else(|p| p.into_inner()) = fresh;
        tracing::info!(model_version = %version, dir = %dir.display(), "artifacts reloaded");
        Ok(version)
    }

    /// Drops sessions idle for longer than the configured timeout; returns
    /// how many were dropped.
    pub fn evict_idle(&self) -> usize {
        let now = Instant::now();
        let mut sessions = self.sessions.write().unwrap_or_else(|p| p.into_inner());
        let before = sessions.len();
        sessions.retain(|_, s| now.duration_since(lock(s).last_used) <= self.config.idle_timeout);
        before - sessions.len()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<LiveSession>>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    pub fn start(&self, req: &StartRequest) -> Result<StartResponse, ApiError> {
        let mood = match req.mood.as_deref() {
            None => None,
            Some(id) => Some(
                Mood::from_id(id)
                    .ok_or_else(|| ApiError::bad_request(format!("unknown mood id {id:?}")).with_code("unknown_mood"))?,
            ),
        };
        let artifacts = self.artifacts();
        let deps = artifacts.deps(self.config.session.clone());
        let seed = req.seed.unwrap_or_else(rand::random);
        let mut state = session::start_session(&req.user_id, mood, &deps, seed)?;
        let first = session::next_track(&mut state, &deps)?;
        let mut sessions = self.sessions.write().unwrap_or_else(|p| p.into_inner());
        let session_id = loop {
            let n = self.counter.fetch_add(1, Ordering::Relaxed);
            let id = format!("{}-{n}", state.session_id);
            if !sessions.contains_key(&id) {
                break id;
            }
        };
        state.session_id = session_id.clone();
        let response = StartResponse {
            session_id: session_id.clone(),
            track: track_of(&artifacts, mood, &first),
            fallback_active: state.fallback_active,
            model_version: artifacts.model_version().to_string(),
        };
        let live = LiveSession {
            state,
            artifacts,
            deps,
            applied: HashMap::new(),
            last_used: Instant::now(),
        };
        sessions.insert(session_id, Arc::new(Mutex::new(live)));
        Ok(response)
    }

    pub fn next(&self, id: &str) -> Result<NextResponse, ApiError> {
        let entry = self.session(id)?;
        let mut live = lock(&entry);
        live.last_used = Instant::now();
        let LiveSession { state, deps, artifacts, .. } = &mut *live;
        let song = session::next_track(state, deps)?;
        Ok(NextResponse {
            track: track_of(artifacts, state.mood, &song),
            fallback_active: state.fallback_active,
            model_version: artifacts.model_version().to_string(),
        })
    }

    pub fn feedback(&self, id: &str, req: &FeedbackRequest) -> Result<FeedbackResponse, ApiError> {
        let entry = self.session(id)?;
        let mut live = lock(&entry);
        live.last_used = Instant::now();
        if let Some(done) = live.applied.get(&req.event_id) {
            return Ok(done.clone());
        }
        let event = FeedbackEvent {
            kind: req.kind,
            song_id: req.song_id.clone(),
            timestamp: req.timestamp.unwrap_or(0),
        };
        let LiveSession { state, deps, .. } = &mut *live;
        let weight = session::apply_feedback(state, &event, deps)?;
        let response = FeedbackResponse {
            ok: true,
            artist_weight: Some(weight),
        };
        live.applied.insert(req.event_id.clone(), response.clone());
        Ok(response)
    }

    pub fn summary(&self, id: &str) -> Result<SessionSummary, ApiError> {
        let entry = self.session(id)?;
        let live = lock(&entry);
        let s = &live.state;
        let a = &live.artifacts;
        Ok(SessionSummary {
            session_id: s.session_id.clone(),
            user_id: s.user_id.clone(),
            mood: s.mood.map(|m| m.id().to_string()),
            threshold: s.threshold,
            fallback_active: s.fallback_active,
            model_version: a.model_version().to_string(),
            current_track: s.current_track().map(|t| track_of(a, s.mood, t)),
            queue: s.queue.iter().map(|q| track_of(a, s.mood, &q.song_id)).collect(),
            history: s.history.clone(),
            artist_weights: s.artist_weights.clone(),
            excluded_songs: s.excluded_songs.iter().cloned().collect(),
            excluded_artists: s.excluded_artists.iter().cloned().collect(),
            barred_songs: s.barred_songs.iter().cloned().collect(),
        })
    }

    pub fn end(&self, id: &str) -> Result<(), ApiError> {
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    /// Checks every live session against its own artifact set.
    pub fn check_sessions(&self) -> Result<(), String> {
        let sessions: Vec<_> = self
            .sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .values()
            .cloned()
            .collect();
        for s in sessions {
            let live = lock(&s);
            live.state
                .check_invariants(&live.deps)
                .map_err(|e| format!("{}: {e}", live.state.session_id))?;
        }
        Ok(())
    }

    /// Writes every live session to `dir` as `<session_id>.json`.
    pub fn save_sessions(&self, dir: &Path) -> Result<usize, ApiError> {
        std::fs::create_dir_all(dir).map_err(|e| ApiError::internal(e.to_string()))?;
        let sessions: Vec<_> = self
            .sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .values()
            .cloned()
            .collect();
        for s in &sessions {
            let live = lock(s);
            live.state.save(&dir.join(format!("{}.json", live.state.session_id)))?;
        }
        Ok(sessions.len())
    }

    /// Restores sessions saved by [`Self::save_sessions`] against the current
    /// artifact set.
    pub fn restore_sessions(&self, dir: &Path) -> Result<usize, ApiError> {
        let entries = std::fs::read_dir(dir).map_err(|e| ApiError::internal(e.to_string()))?;
        let artifacts = self.artifacts();
        let mut n = 0;
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let state = SessionState::load(&path)?;
            let live = LiveSession {
                deps: artifacts.deps(self.config.session.clone()),
                artifacts: artifacts.clone(),
                state,
                applied: HashMap::new(),
                last_used: Instant::now(),
            };
            let id = live.state.session_id.clone();
            self.sessions
                .write()
                .unwrap_or_else(|p| p.into_inner())
                .insert(id, Arc::new(Mutex::new(live)));
            n += 1;
        }
        Ok(n)
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

type Shared = State<Arc<ServiceState>>;

async fn handle_moods() -> Json<Vec<MoodInfo>> {
    Json(
        Mood::ALL
            .iter()
            .map(|m| MoodInfo {
                id: m.id().to_string(),
                name: m.display_name().to_string(),
                description: m.description().to_string(),
            })
            .collect(),
    )
}

async fn handle_health(State(s): Shared) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        model_version: s.model_version(),
        sessions: s.session_count(),
    })
}

async fn handle_start(State(s): Shared, body: Bytes) -> Result<Json<StartResponse>, ApiError> {
    let req: StartRequest = parse(&body)?;
    Ok(Json(s.start(&req)?))
}

async fn handle_next(State(s): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<NextResponse>, ApiError> {
    Ok(Json(s.next(&id)?))
}

async fn handle_feedback(
    State(s): Shared,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<FeedbackResponse>, ApiError> {
    let req: FeedbackRequest = parse(&body)?;
    Ok(Json(s.feedback(&id, &req)?))
}

async fn handle_summary(State(s): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<SessionSummary>, ApiError> {
    Ok(Json(s.summary(&id)?))
}

async fn handle_end(State(s): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<FeedbackResponse>, ApiError> {
    s.end(&id)?;
    Ok(Json(FeedbackResponse {
        ok: true,
        artist_weight: None,
    }))
}

async fn handle_reload(State(s): Shared, body: Bytes) -> Result<Json<ReloadResponse>, ApiError> {
    let req: ReloadRequest = if body.is_empty() { ReloadRequest::default() } else { parse(&body)? };
    let dir = req
        .snapshot_dir
        .or_else(|| s.config.snapshot_dir.clone())
        .ok_or_else(|| ApiError::bad_request("no snapshot_dir given and none configured").with_code("no_snapshot_dir"))?;
    let state = s.clone();
    let model_version = tokio::task::spawn_blocking(move || state.reload_artifacts(&dir))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(ReloadResponse { model_version }))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/v1/moods", get(handle_moods))
        .route("/v1/health", get(handle_health))
        .route("/v1/session", post(handle_start))
        .route("/v1/session/{id}", get(handle_summary))
        .route("/v1/session/{id}", delete(handle_end))
        .route("/v1/session/{id}/next", post(handle_next))
        .route("/v1/session/{id}/feedback", post(handle_feedback))
        .route("/v1/admin/reload", post(handle_reload))
        .with_state(state)
}

/// Serves the API on `addr` until ctrl-c, evicting idle sessions once a
/// minute.
pub async fn serve(addr: SocketAddr, state: Arc<ServiceState>) -> std::io::Result<()> {
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            let n = sweeper.evict_idle();
            if n > 0 {
                tracing::info!(evicted = n, "dropped idle sessions");
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
