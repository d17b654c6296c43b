//! Mood-conditioned radio sessions.
//!
//! A session keeps a short queue of upcoming songs. Queue refills take the
//! user's nearest songs from the ANN index, drop everything blocked
//! (exclusions, skipped songs, the recent play window, songs already
//! queued) and, when a mood is set, every song whose mood score is missing
//! or below the threshold. A share of each refill comes from the user's
//! favorites. When too few neighbors survive, or the user has no vector,
//! the session serves the pre-selected fallback pool for the mood instead.
//!
//! The next track is the queued song with the highest priority, where
//! priority grows with affinity and with the adaptive weight of the artist,
//! while keeping the same artist out of the last `artist_spacing` plays
//! whenever another artist is queued.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ann_index::Neighbor;
use crate::catalog::{eligible_for_flow, Catalog};
use crate::mood::{Mood, MoodMap};
use crate::scalar::dot;
use crate::snapshot::{self, SnapshotError};
use crate::{AnnIndex, EmbeddingSpace, MoodScoreTable, NeighborList, Real};

const SESSION_KIND: &str = "session";
const FALLBACK_KIND: &str = "fallback_pool";

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("user {user_id:?} has {favorites} favorites, needs {required}")]
    IneligibleUser {
        user_id: String,
        favorites: usize,
        required: usize,
    },
    #[error("user {0:?} has no embedding vector")]
    NoUserVector(String),
    #[error("fallback pool for {0} is empty")]
    EmptyFallback(String),
    #[error("session exhausted: no candidates and no fallback songs left")]
    Exhausted,
    #[error("song {0:?} has not been played in this session")]
    NotPlayed(String),
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("candidate retrieval failed: {0}")]
    Retrieval(String),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Minimum mood score, per mood. A song qualifies when `score >= threshold`.
    pub thresholds: MoodMap<Real>,
    pub candidate_k: usize,
    pub n_probe: usize,
    pub min_candidates: usize,
    pub favorites_ratio: Real,
    pub artist_spacing: usize,
    pub like_boost: Real,
    pub skip_penalty: Real,
    pub no_repeat_window: usize,
    /// Refill when fewer than this many songs are queued.
    pub refill_below: usize,
    pub refill_batch: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            thresholds: MoodMap::splat(0.5),
            candidate_k: 500,
            n_probe: 16,
            min_candidates: 50,
            favorites_ratio: 0.3,
            artist_spacing: 3,
            like_boost: 1.5,
            skip_penalty: 0.5,
            no_repeat_window: 100,
            refill_below: 5,
            refill_batch: 20,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: &str| Err(SessionError::Config(m.to_string()));
        if self.thresholds.0.iter().any(|t| !(0.0..1.0).contains(t)) {
            return bad("thresholds must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.favorites_ratio) {
            return bad("favorites_ratio must lie in [0, 1]");
        }
        if self.artist_spacing == 0 {
            return bad("artist_spacing must be at least 1");
        }
        if !(self.like_boost > 1.0) || !(self.skip_penalty > 0.0 && self.skip_penalty < 1.0) {
            return bad("like_boost must exceed 1 and skip_penalty must lie in (0, 1)");
        }
        if self.candidate_k == 0 || self.n_probe == 0 || self.refill_batch == 0 {
            return bad("candidate_k, n_probe and refill_batch must be at least 1");
        }
        Ok(())
    }
}

/// Pre-selected songs per mood, served when personalization runs dry.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FallbackPool {
    pub model_version: String,
    pub pools: BTreeMap<Mood, Vec<String>>,
}

impl FallbackPool {
    pub fn pool(&self, mood: Mood) -> &[String] {
        self.pools.get(&mood).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Pool used by mood-less sessions: all mood pools interleaved, first
    /// occurrence wins.
    pub fn merged(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let longest = self.pools.values().map(Vec::len).max().unwrap_or(0);
        let mut out = Vec::new();
        for i in 0..longest {
            for pool in self.pools.values() {
                if let Some(id) = pool.get(i) {
                    if seen.insert(id.as_str()) {
                        out.push(id.clone());
                    }
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), SessionError> {
        Ok(snapshot::save(path, FALLBACK_KIND, self)?)
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        Ok(snapshot::load(path, FALLBACK_KIND)?)
    }
}

/// Top `size` songs by popularity among those scoring at least `threshold`
/// for `mood`. Ties go to the smaller song id; missing popularity counts as 0.
pub fn build_fallback_pool(
    mood: Mood,
    scores: &MoodScoreTable,
    popularity: &HashMap<String, Real>,
    size: usize,
    threshold: Real,
) -> Result<Vec<String>, SessionError> {
    let mut qualifying: Vec<(&str, Real)> = scores
        .iter()
        .filter(|&(_, m, s)| m == mood && s >= threshold)
        .map(|(id, _, _)| (id, popularity.get(id).copied().unwrap_or(0.0)))
        .collect();
    if qualifying.is_empty() {
        return Err(SessionError::EmptyFallback(mood.name().to_string()));
    }
    qualifying.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    qualifying.truncate(size);
    Ok(qualifying.into_iter().map(|(id, _)| id.to_string()).collect())
}

pub fn build_fallback_pools(
    scores: &MoodScoreTable,
    popularity: &HashMap<String, Real>,
    size: usize,
    thresholds: &MoodMap<Real>,
) -> Result<FallbackPool, SessionError> {
    let mut pools = BTreeMap::new();
    for mood in Mood::ALL {
        pools.insert(
            mood,
            build_fallback_pool(mood, scores, popularity, size, thresholds[mood])?,
        );
    }
    Ok(FallbackPool {
        model_version: scores.model_version.clone(),
        pools,
    })
}

/// Shared, immutable model artifacts a session reads from.
#[derive(Debug, Clone)]
pub struct SessionDeps {
    pub catalog: Arc<Catalog>,
    pub space: Arc<EmbeddingSpace>,
    pub index: Arc<AnnIndex>,
    pub scores: Arc<MoodScoreTable>,
    pub fallback: Arc<FallbackPool>,
    pub config: SessionConfig,
}

impl SessionDeps {
    fn artist_of(&self, song_id: &str) -> Option<&str> {
        self.catalog.song(song_id).map(|s| s.artist_id.as_str())
    }

    fn passes_mood(&self, song_id: &str, mood: Option<Mood>) -> bool {
        match mood {
            None => true,
            Some(m) => self
                .scores
                .get(song_id, m)
                .is_some_and(|s| s >= self.config.thresholds[m]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackSource {
    Discovery,
    Favorite,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuedTrack {
    pub song_id: String,
    pub artist_id: String,
    /// Inner product with the user vector; for fallback songs without one,
    /// a rank-derived stand-in in `(0, 1]`.
    pub affinity: Real,
    pub source: TrackSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    Like,
    Skip,
    ExcludeSong,
    ExcludeArtist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub kind: FeedbackKind,
    pub song_id: String,
    pub timestamp: i64,
}

/// Songs and artists a refill must not draw.
#[derive(Debug, Clone, Default)]
pub struct Blocklist {
    pub songs: HashSet<String>,
    pub artists: HashSet<String>,
}

impl Blocklist {
    fn blocks(&self, song_id: &str, artist_id: Option<&str>) -> bool {
        self.songs.contains(song_id) || artist_id.is_some_and(|a| self.artists.contains(a))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub user_id: String,
    /// `None` is regular, mood-agnostic Flow.
    pub mood: Option<Mood>,
    pub queue: Vec<QueuedTrack>,
    /// Every played song, oldest first.
    pub history: Vec<String>,
    pub artist_weights: BTreeMap<String, Real>,
    pub excluded_songs: BTreeSet<String>,
    pub excluded_artists: BTreeSet<String>,
    /// Skipped songs; never served again in this session.
    pub barred_songs: BTreeSet<String>,
    pub fallback_active: bool,
    pub rng_seed: u64,
    /// Threshold applied to this session's mood (0 when no mood).
    pub threshold: Real,
    rng: ChaCha8Rng,
}

/// Ranking key for a queued song. Increasing in the artist weight for any
/// affinity sign, so likes always promote and skips always demote.
pub fn priority(affinity: Real, artist_weight: Real) -> Real {
    if affinity >= 0.0 {
        affinity * artist_weight
    } else {
        affinity / artist_weight
    }
}

/// Neighbors of the user in the embedding space that survive the session
/// filters, in affinity order.
pub fn candidate_pool(
    user_id: &str,
    mood: Option<Mood>,
    deps: &SessionDeps,
    blocked: &Blocklist,
) -> Result<NeighborList, SessionError> {
    let user = deps
        .space
        .user_vector(user_id)
        .ok_or_else(|| SessionError::NoUserVector(user_id.to_string()))?;
    let raw = deps
        .index
        .query(user, deps.config.candidate_k, deps.config.n_probe)
        .map_err(|e| SessionError::Retrieval(e.to_string()))?;
    let kept: Vec<Neighbor<Real>> = raw
        .0
        .into_iter()
        .filter(|n| !blocked.blocks(&n.song_id, deps.artist_of(&n.song_id)))
        .filter(|n| deps.passes_mood(&n.song_id, mood))
        .collect();
    Ok(crate::ann_index::NeighborList(kept))
}

pub fn start_session(
    user_id: &str,
    mood: Option<Mood>,
    deps: &SessionDeps,
    seed: u64,
) -> Result<SessionState, SessionError> {
    deps.config.validate()?;
    let user = deps
        .catalog
        .user(user_id)
        .ok_or_else(|| SessionError::UnknownUser(user_id.to_string()))?;
    if !eligible_for_flow(user) {
        return Err(SessionError::IneligibleUser {
            user_id: user_id.to_string(),
            favorites: user.favorite_count(),
            required: crate::catalog::FLOW_ELIGIBILITY_THRESHOLD,
        });
    }
    let fallback_active = match candidate_pool(user_id, mood, deps, &Blocklist::default()) {
        Ok(c) => c.len() < deps.config.min_candidates,
        Err(SessionError::NoUserVector(_)) => true,
        Err(e) => return Err(e),
    };
    let mut state = SessionState {
        session_id: format!("{user_id}-{seed:016x}"),
        user_id: user_id.to_string(),
        mood,
        queue: Vec::new(),
        history: Vec::new(),
        artist_weights: BTreeMap::new(),
        excluded_songs: BTreeSet::new(),
        excluded_artists: BTreeSet::new(),
        barred_songs: BTreeSet::new(),
        fallback_active,
        rng_seed: seed,
        threshold: mood.map_or(0.0, |m| deps.config.thresholds[m]),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    state.refill(deps)?;
    if state.queue.is_empty() {
        return Err(if state.fallback_active {
            SessionError::EmptyFallback(mood.map_or("regular Flow", |m| m.name()).to_string())
        } else {
            SessionError::Exhausted
        });
    }
    Ok(state)
}

pub fn next_track(session: &mut SessionState, deps: &SessionDeps) -> Result<String, SessionError> {
    session.next_track(deps)
}

pub fn apply_feedback(
    session: &mut SessionState,
    event: &FeedbackEvent,
    deps: &SessionDeps,
) -> Result<Real, SessionError> {
    session.apply_feedback(event, deps)
}

/// Picks `want` items from the head of `ranked`, sampling uniformly among
/// the first `2 * want` and keeping their ranked order.
fn sample_head<T: Clone>(ranked: &[T], want: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    if want == 0 || ranked.is_empty() {
        return Vec::new();
    }
    let window = ranked.len().min(want.saturating_mul(2));
    let take = want.min(window);
    let mut picked = sample(rng, window, take).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| ranked[i].clone()).collect()
}

impl SessionState {
    pub fn artist_weight(&self, artist_id: &str) -> Real {
        self.artist_weights.get(artist_id).copied().unwrap_or(1.0)
    }

    /// The last `window` played songs.
    pub fn recent(&self, window: usize) -> &[String] {
        &self.history[self.history.len().saturating_sub(window)..]
    }

    pub fn current_track(&self) -> Option<&str> {
        self.history.last().map(String::as_str)
    }

    pub fn blocklist(&self, deps: &SessionDeps) -> Blocklist {
        let mut songs: HashSet<String> = self.excluded_songs.iter().cloned().collect();
        songs.extend(self.barred_songs.iter().cloned());
        songs.extend(self.recent(deps.config.no_repeat_window).iter().cloned());
        songs.extend(self.queue.iter().map(|q| q.song_id.clone()));
        Blocklist {
            songs,
            artists: self.excluded_artists.iter().cloned().collect(),
        }
    }

    fn user_affinity(&self, deps: &SessionDeps, song_id: &str) -> Option<Real> {
        let u = deps.space.user_vector(&self.user_id)?;
        let s = deps.space.song_vector(song_id)?;
        Some(dot(u, s))
    }

    fn refill(&mut self, deps: &SessionDeps) -> Result<(), SessionError> {
        if !self.fallback_active {
            let added = self.refill_personal(deps)?;
            if added > 0 {
                return Ok(());
            }
            self.fallback_active = true;
        }
        self.refill_fallback(deps);
        Ok(())
    }

    fn refill_personal(&mut self, deps: &SessionDeps) -> Result<usize, SessionError> {
        let cfg = &deps.config;
        let blocked = self.blocklist(deps);
        let candidates = match candidate_pool(&self.user_id, self.mood, deps, &blocked) {
            Ok(c) => c,
            Err(SessionError::NoUserVector(_)) => return Ok(0),
            Err(e) => return Err(e),
        };
        let user = deps
            .catalog
            .user(&self.user_id)
            .ok_or_else(|| SessionError::UnknownUser(self.user_id.clone()))?;

        let mut favorites: Vec<(String, Real)> = user
            .favorite_song_ids
            .iter()
            .filter(|id| !blocked.blocks(id, deps.artist_of(id)))
            .filter(|id| deps.passes_mood(id, self.mood))
            .filter_map(|id| Some((id.clone(), self.user_affinity(deps, id)?)))
            .collect();
        favorites.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let fav_slots = ((cfg.refill_batch as Real) * cfg.favorites_ratio).round() as usize;
        let picked_favs = sample_head(&favorites, fav_slots.min(favorites.len()), &mut self.rng);
        let fav_set: HashSet<&str> = picked_favs.iter().map(|(id, _)| id.as_str()).collect();
        let discoveries: Vec<(String, Real)> = candidates
            .0
            .iter()
            .filter(|n| !fav_set.contains(n.song_id.as_str()))
            .filter(|n| !user.favorite_song_ids.contains(&n.song_id))
            .map(|n| (n.song_id.clone(), n.similarity))
            .collect();
        let disc_slots = cfg.refill_batch - picked_favs.len();
        let picked_disc = sample_head(&discoveries, disc_slots, &mut self.rng);
        // Favorites top up any discovery shortfall.
        let extra_favs: Vec<(String, Real)> = favorites
            .iter()
            .filter(|(id, _)| !fav_set.contains(id.as_str()))
            .take(disc_slots - picked_disc.len())
            .cloned()
            .collect();
        let mut added = 0;
        for ((id, aff), source) in picked_favs
            .into_iter()
            .chain(extra_favs)
            .map(|p| (p, TrackSource::Favorite))
            .chain(picked_disc.into_iter().map(|p| (p, TrackSource::Discovery)))
        {
            let Some(artist) = deps.artist_of(&id) else {
                continue;
            };
            self.queue.push(QueuedTrack {
                artist_id: artist.to_string(),
                song_id: id,
                affinity: aff,
                source,
            });
            added += 1;
        }
        Ok(added)
    }

    fn refill_fallback(&mut self, deps: &SessionDeps) {
        let merged;
        let pool: &[String] = match self.mood {
            Some(m) => deps.fallback.pool(m),
            None => {
                merged = deps.fallback.merged();
                &merged
            }
        };
        let blocked = self.blocklist(deps);
        let len = pool.len();
        let picks: Vec<QueuedTrack> = pool
            .iter()
            .enumerate()
            .filter_map(|(rank, id)| {
                let artist = deps.artist_of(id)?;
                if blocked.blocks(id, Some(artist)) || !deps.passes_mood(id, self.mood) {
                    return None;
                }
                let affinity = self
                    .user_affinity(deps, id)
                    .unwrap_or(1.0 - rank as Real / len as Real);
                Some(QueuedTrack {
                    song_id: id.clone(),
                    artist_id: artist.to_string(),
                    affinity,
                    source: TrackSource::Fallback,
                })
            })
            .take(deps.config.refill_batch)
            .collect();
        self.queue.extend(picks);
    }

    fn next_track(&mut self, deps: &SessionDeps) -> Result<String, SessionError> {
        if self.queue.is_empty() {
            self.refill(deps)?;
        }
        if self.queue.is_empty() {
            return Err(SessionError::Exhausted);
        }
        let recent_artists: HashSet<&str> = self
            .recent(deps.config.artist_spacing)
            .iter()
            .filter_map(|id| deps.artist_of(id))
            .collect();
        let spaced = self
            .queue
            .iter()
            .any(|q| !recent_artists.contains(q.artist_id.as_str()));
        let mut best: Option<(usize, Real)> = None;
        for (i, q) in self.queue.iter().enumerate() {
            if spaced && recent_artists.contains(q.artist_id.as_str()) {
                continue;
            }
            let p = priority(q.affinity, self.artist_weight(&q.artist_id));
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((i, p));
            }
        }
        let (pos, _) = best.expect("queue is non-empty");
        let track = self.queue.remove(pos);
        self.history.push(track.song_id.clone());
        if self.queue.len() < deps.config.refill_below {
            self.refill(deps)?;
        }
        Ok(track.song_id)
    }

    /// Applies one feedback event and returns the affected artist's weight.
    fn apply_feedback(&mut self, event: &FeedbackEvent, deps: &SessionDeps) -> Result<Real, SessionError> {
        if !self.history.iter().any(|s| s == &event.song_id) {
            return Err(SessionError::NotPlayed(event.song_id.clone()));
        }
        let artist = deps
            .artist_of(&event.song_id)
            .ok_or_else(|| SessionError::NotPlayed(event.song_id.clone()))?
            .to_string();
        let cfg = &deps.config;
        match event.kind {
            FeedbackKind::Like => {
                let w = self.artist_weight(&artist) * cfg.like_boost;
                self.artist_weights.insert(artist.clone(), w.min(Real::MAX));
            }
            FeedbackKind::Skip => {
                let w = self.artist_weight(&artist) * cfg.skip_penalty;
                self.artist_weights.insert(artist.clone(), w.max(Real::MIN_POSITIVE));
                self.barred_songs.insert(event.song_id.clone());
                self.queue.retain(|q| q.song_id != event.song_id);
            }
            FeedbackKind::ExcludeSong => {
                self.excluded_songs.insert(event.song_id.clone());
                self.queue.retain(|q| q.song_id != event.song_id);
            }
            FeedbackKind::ExcludeArtist => {
                self.queue.retain(|q| q.artist_id != artist);
                self.excluded_artists.insert(artist.clone());
            }
        }
        if self.queue.len() < cfg.refill_below {
            self.refill(deps)?;
        }
        Ok(self.artist_weight(&artist))
    }

    /// Checks the queue-level invariants; returns a description of the first
    /// violation.
    pub fn check_invariants(&self, deps: &SessionDeps) -> Result<(), String> {
        let recent: HashSet<&str> = self
            .recent(deps.config.no_repeat_window)
            .iter()
            .map(String::as_str)
            .collect();
        let mut seen = HashSet::new();
        for q in &self.queue {
            if !seen.insert(q.song_id.as_str()) {
                return Err(format!("{} queued twice", q.song_id));
            }
            if recent.contains(q.song_id.as_str()) {
                return Err(format!("{} queued while in the recent window", q.song_id));
            }
            if self.excluded_songs.contains(&q.song_id) || self.barred_songs.contains(&q.song_id) {
                return Err(format!("{} queued despite exclusion", q.song_id));
            }
            if self.excluded_artists.contains(&q.artist_id) {
                return Err(format!("{} queued despite artist exclusion", q.song_id));
            }
            if let Some(m) = self.mood {
                let ok = deps.scores.get(&q.song_id, m).is_some_and(|s| s >= self.threshold);
                if !ok {
                    return Err(format!("{} queued below the {m} threshold", q.song_id));
                }
            }
        }
        if self.artist_weights.values().any(|w| !(*w > 0.0)) {
            return Err("non-positive artist weight".into());
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), SessionError> {
        Ok(snapshot::save(path, SESSION_KIND, self)?)
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        Ok(snapshot::load(path, SESSION_KIND)?)
    }
}
