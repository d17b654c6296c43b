//! Synthetic worlds and listening simulation.
//!
//! [`generate_world`] builds a catalog whose 256-d audio embeddings carry
//! mood structure: each mood owns a block of `anchor_support` coordinates,
//! shifted by `+signal` when the song has the mood and `-signal` otherwise,
//! on top of Gaussian noise. The label for a mood follows the mean of its
//! block, with songs inside `(-margin, margin)` left unlabeled. Artists
//! belong to genres, genres skew both mood presence and the remaining
//! coordinates, and users stream mostly within one or two favourite genres.
//!
//! [`simulate_days`] replays users day by day against a live session stack.
//! Each session picks a mood in proportion to the day-of-week profile, runs
//! a geometric number of tracks through the real session engine, and skips
//! more often when the user's affinity with the track is low.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, Weekday};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Geometric, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{
    Artist, Catalog, CatalogError, InteractionEvent, Label, MoodLabel, Song, User, AUDIO_EMBEDDING_DIM,
};
use crate::mood::{Mood, MoodMap};
use crate::session::{FeedbackEvent, FeedbackKind, SessionDeps, SessionError};
use crate::Real;

/// Monday 2022-04-04 00:00:00 UTC.
pub const DEFAULT_START: i64 = 1_649_030_400;
const DAY: i64 = 86_400;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("only {found} songs qualify as {class} for {mood}, {required} requested")]
    NotEnoughLabels {
        mood: Mood,
        class: &'static str,
        found: usize,
        required: usize,
    },
    #[error("stream log is empty")]
    EmptyLog,
    #[error("stream log line {line}: {message}")]
    LogFormat { line: usize, message: String },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Base session intensity per mood, Monday first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoodTimeProfile(pub MoodMap<[Real; 7]>);

impl MoodTimeProfile {
    pub fn intensity(&self, mood: Mood, weekday: Weekday) -> Real {
        self.0[mood][weekday.num_days_from_monday() as usize]
    }
}

impl Default for MoodTimeProfile {
    /// Motivation leads every day, Party peaks Friday to Sunday, Focus is a
    /// weekday mood and Chill rises on Sundays.
    fn default() -> Self {
        let mut m = MoodMap::splat([0.0; 7]);
        m[Mood::Chill] = [0.14, 0.14, 0.14, 0.14, 0.13, 0.15, 0.20];
        m[Mood::Focus] = [0.18, 0.18, 0.18, 0.18, 0.15, 0.07, 0.07];
        m[Mood::Melancholy] = [0.08; 7];
        m[Mood::Motivation] = [0.32, 0.32, 0.32, 0.32, 0.30, 0.29, 0.29];
        m[Mood::Party] = [0.08, 0.08, 0.08, 0.09, 0.17, 0.19, 0.15];
        m[Mood::YouAndMe] = [0.08, 0.08, 0.08, 0.08, 0.09, 0.10, 0.09];
        MoodTimeProfile(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingGenerator {
    /// Coordinates owned by each mood's anchor.
    pub anchor_support: usize,
    pub signal: Real,
    pub noise_sigma: Real,
    /// Labels are only assigned outside `(-margin, margin)`.
    pub margin: Real,
    /// Mean probability that a song carries a given mood.
    pub mood_presence: Real,
    /// Spread of the per-genre multiplier on mood presence.
    pub genre_mood_skew: Real,
    pub genre_signal: Real,
}

impl Default for EmbeddingGenerator {
    fn default() -> Self {
        EmbeddingGenerator {
            anchor_support: 8,
            signal: 1.0,
            noise_sigma: 0.5,
            margin: 0.5,
            mood_presence: 0.3,
            genre_mood_skew: 0.6,
            genre_signal: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorModel {
    pub sessions_per_user_per_day: Real,
    pub mean_session_length: Real,
    /// Share of sessions started from the wheel centre (no mood).
    pub regular_flow_share: Real,
    /// Skip probability at zero affinity.
    pub base_skip: Real,
    /// How fast the skip probability decays with positive affinity.
    pub skip_affinity_scale: Real,
    pub like_probability: Real,
    pub exclude_artist_probability: Real,
}

impl Default for BehaviorModel {
    fn default() -> Self {
        BehaviorModel {
            sessions_per_user_per_day: 1.0,
            mean_session_length: 12.0,
            regular_flow_share: 0.2,
            base_skip: 0.35,
            skip_affinity_scale: 3.0,
            like_probability: 0.08,
            exclude_artist_probability: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_users: usize,
    pub n_songs: usize,
    pub n_artists: usize,
    pub n_genres: usize,
    pub n_days: usize,
    pub start_timestamp: i64,
    pub mood_time_profile: MoodTimeProfile,
    pub embeddings: EmbeddingGenerator,
    pub positives_per_mood: usize,
    pub negatives_per_mood: usize,
    pub streams_per_user: usize,
    pub favorite_songs_per_user: usize,
    pub favorite_artists_per_user: usize,
    pub behavior: BehaviorModel,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_users: 3000,
            n_songs: 5000,
            n_artists: 500,
            n_genres: 8,
            n_days: 14,
            start_timestamp: DEFAULT_START,
            mood_time_profile: MoodTimeProfile::default(),
            embeddings: EmbeddingGenerator::default(),
            positives_per_mood: 300,
            negatives_per_mood: 300,
            streams_per_user: 60,
            favorite_songs_per_user: 20,
            favorite_artists_per_user: 3,
            behavior: BehaviorModel::default(),
            seed: 7,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        let required = self.positives_per_mood + self.negatives_per_mood;
        if required > self.n_songs {
            return bad(format!(
                "{required} labels per mood requested but the catalog has {} songs",
                self.n_songs
            ));
        }
        if self.n_songs == 0 || self.n_artists == 0 || self.n_genres == 0 {
            return bad("catalog needs at least one song, artist and genre".into());
        }
        if Mood::COUNT * self.embeddings.anchor_support > AUDIO_EMBEDDING_DIM {
            return bad("mood anchors do not fit in the embedding".into());
        }
        let profile = &self.mood_time_profile.0;
        if profile.0.iter().flatten().any(|v| !(*v >= 0.0)) {
            return bad("mood intensities must be non-negative".into());
        }
        for day in 0..7 {
            if profile.0.iter().all(|row| row[day] <= 0.0) {
                return bad(format!("no mood has positive intensity on weekday {day}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub catalog: Catalog,
    pub interactions: Vec<InteractionEvent>,
    pub labels: Vec<MoodLabel>,
    /// Ground-truth mood presence per song, in catalog order.
    pub mood_truth: Vec<MoodMap<bool>>,
    pub artist_genre: Vec<usize>,
}

fn mood_block(mood: Mood, support: usize) -> std::ops::Range<usize> {
    mood.index() * support..(mood.index() + 1) * support
}

/// Mean of the mood's anchor block: the generator's own mood rule.
pub fn anchor_projection(embedding: &[Real], mood: Mood, support: usize) -> Real {
    let block = &embedding[mood_block(mood, support)];
    block.iter().sum::<Real>() / support as Real
}

pub fn generate_world(config: &SimConfig) -> Result<World, SimError> {
    config.validate()?;
    let g = &config.embeddings;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, g.noise_sigma).map_err(|e| SimError::Config(e.to_string()))?;

    let genre_mood: Vec<MoodMap<Real>> = (0..config.n_genres)
        .map(|_| {
            MoodMap::from_fn(|_| {
                let skew = 1.0 + g.genre_mood_skew * rng.random_range(-1.0..=1.0);
                (g.mood_presence * skew).clamp(0.02, 0.95)
            })
        })
        .collect();
    let tail_start = Mood::COUNT * g.anchor_support;
    let genre_dims: Vec<Vec<usize>> = (0..config.n_genres)
        .map(|_| {
            (0..8)
                .map(|_| rng.random_range(tail_start..AUDIO_EMBEDDING_DIM))
                .collect()
        })
        .collect();

    let artist_genre: Vec<usize> = (0..config.n_artists)
        .map(|_| rng.random_range(0..config.n_genres))
        .collect();
    let artists: Vec<Artist> = (0..config.n_artists)
        .map(|i| Artist {
            artist_id: format!("a{i:05}"),
            name: format!("Artist {i}"),
        })
        .collect();

    let mut songs = Vec::with_capacity(config.n_songs);
    let mut mood_truth = Vec::with_capacity(config.n_songs);
    let mut songs_by_genre: Vec<Vec<usize>> = vec![Vec::new(); config.n_genres];
    for i in 0..config.n_songs {
        let artist = rng.random_range(0..config.n_artists);
        let genre = artist_genre[artist];
        songs_by_genre[genre].push(i);
        let truth = MoodMap::from_fn(|m| rng.random_bool(genre_mood[genre][m]));
        let mut e: Vec<Real> = (0..AUDIO_EMBEDDING_DIM).map(|_| noise.sample(&mut rng)).collect();
        for m in Mood::ALL {
            let shift = if truth[m] { g.signal } else { -g.signal };
            for d in mood_block(m, g.anchor_support) {
                e[d] += shift;
            }
        }
        for &d in &genre_dims[genre] {
            e[d] += g.genre_signal;
        }
        songs.push(Song {
            song_id: format!("s{i:06}"),
            artist_id: artists[artist].artist_id.clone(),
            title: format!("Track {i}"),
            audio_embedding: Some(e),
        });
        mood_truth.push(truth);
    }

    let mut labels = Vec::new();
    for mood in Mood::ALL {
        let mut order: Vec<usize> = (0..config.n_songs).collect();
        shuffle(&mut order, &mut rng);
        let proj = |i: usize| anchor_projection(songs[i].audio_embedding.as_ref().unwrap(), mood, g.anchor_support);
        let pos: Vec<usize> = order.iter().copied().filter(|&i| proj(i) >= g.margin).collect();
        let neg: Vec<usize> = order.iter().copied().filter(|&i| proj(i) <= -g.margin).collect();
        for (class, pool, want) in [
            ("positive", &pos, config.positives_per_mood),
            ("negative", &neg, config.negatives_per_mood),
        ] {
            if pool.len() < want {
                return Err(SimError::NotEnoughLabels {
                    mood,
                    class,
                    found: pool.len(),
                    required: want,
                });
            }
        }
        let mut chosen: Vec<(usize, Label)> = pos[..config.positives_per_mood]
            .iter()
            .map(|&i| (i, Label::Positive))
            .chain(neg[..config.negatives_per_mood].iter().map(|&i| (i, Label::Negative)))
            .collect();
        chosen.sort_by_key(|c| c.0);
        labels.extend(chosen.into_iter().map(|(i, label)| MoodLabel {
            song_id: songs[i].song_id.clone(),
            mood,
            label,
        }));
    }

    let mut users = Vec::with_capacity(config.n_users);
    let mut interactions = Vec::new();
    let history_start = config.start_timestamp - 30 * DAY;
    for u in 0..config.n_users {
        let user_id = format!("u{u:05}");
        let primary = rng.random_range(0..config.n_genres);
        let secondary = rng.random_range(0..config.n_genres);
        let mut totals: BTreeMap<usize, Real> = BTreeMap::new();
        for _ in 0..config.streams_per_user {
            let roll: f64 = rng.random();
            let genre = if roll < 0.6 {
                primary
            } else if roll < 0.85 {
                secondary
            } else {
                rng.random_range(0..config.n_genres)
            };
            let Some(&song) = songs_by_genre[genre].choose(&mut rng) else {
                continue;
            };
            let weight = rng.random_range(1..=5) as Real;
            *totals.entry(song).or_insert(0.0) += weight;
            interactions.push(InteractionEvent {
                user_id: user_id.clone(),
                song_id: songs[song].song_id.clone(),
                weight,
                timestamp: rng.random_range(history_start..config.start_timestamp),
            });
        }
        let mut ranked: Vec<(usize, Real)> = totals.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let favorite_song_ids: BTreeSet<String> = ranked
            .iter()
            .take(config.favorite_songs_per_user)
            .map(|(s, _)| songs[*s].song_id.clone())
            .collect();
        let mut artist_totals: BTreeMap<&str, Real> = BTreeMap::new();
        for (s, w) in &ranked {
            *artist_totals.entry(songs[*s].artist_id.as_str()).or_insert(0.0) += w;
        }
        let mut artist_rank: Vec<(&str, Real)> = artist_totals.into_iter().collect();
        artist_rank.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        let favorite_artist_ids = artist_rank
            .iter()
            .take(config.favorite_artists_per_user)
            .map(|(a, _)| a.to_string())
            .collect();
        users.push(User {
            user_id,
            favorite_song_ids,
            favorite_artist_ids,
        });
    }
    interactions.sort_by_key(|e| e.timestamp);

    let catalog = Catalog::new(artists, songs, users)?;
    Ok(World {
        catalog,
        interactions,
        labels,
        mood_truth,
        artist_genre,
    })
}

fn shuffle<T>(v: &mut [T], rng: &mut ChaCha8Rng) {
    use rand::seq::SliceRandom;
    v.shuffle(rng);
}

/// Total stream weight per song.
pub fn popularity(events: &[InteractionEvent]) -> HashMap<String, Real> {
    let mut out = HashMap::new();
    for e in events {
        *out.entry(e.song_id.clone()).or_insert(0.0) += e.weight;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Stream {
    pub timestamp: i64,
    pub user_id: String,
    pub song_id: String,
    pub mood: Option<Mood>,
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StreamLog {
    pub streams: Vec<Stream>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimStats {
    pub sessions_started: usize,
    pub sessions_failed: usize,
    pub sessions_exhausted: usize,
    pub fallback_sessions: usize,
    pub skips: usize,
    pub likes: usize,
    pub exclusions: usize,
}

impl SimStats {
    fn merge(&mut self, o: &SimStats) {
        self.sessions_started += o.sessions_started;
        self.sessions_failed += o.sessions_failed;
        self.sessions_exhausted += o.sessions_exhausted;
        self.fallback_sessions += o.fallback_sessions;
        self.skips += o.skips;
        self.likes += o.likes;
        self.exclusions += o.exclusions;
    }
}

fn derive_seed(seed: u64, day: usize, user: usize) -> u64 {
    // splitmix64 over the packed coordinates
    let mut z = seed
        .wrapping_add((day as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((user as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn weekday_of(timestamp: i64) -> Weekday {
    date_of(timestamp).weekday()
}

pub fn date_of(timestamp: i64) -> NaiveDate {
    DateTime::from_timestamp(timestamp, 0)
        .map(|d| d.date_naive())
        .unwrap_or_default()
}

fn simulate_user_day(
    user_idx: usize,
    user_id: &str,
    day: usize,
    deps: &SessionDeps,
    config: &SimConfig,
) -> (Vec<Stream>, SimStats) {
    let b = &config.behavior;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, day, user_idx));
    let mut streams = Vec::new();
    let mut stats = SimStats::default();
    let day_start = config.start_timestamp + day as i64 * DAY;
    let weekday = weekday_of(day_start);
    let weights: Vec<Real> = Mood::ALL
        .iter()
        .map(|&m| config.mood_time_profile.intensity(m, weekday))
        .collect();
    let Ok(mood_dist) = WeightedIndex::new(&weights) else {
        return (streams, stats);
    };
    let length_dist = Geometric::new(1.0 / b.mean_session_length.max(1.0)).expect("valid geometric parameter");

    let whole = b.sessions_per_user_per_day.floor() as usize;
    let n_sessions = whole + usize::from(rng.random_bool(b.sessions_per_user_per_day.fract()));
    for k in 0..n_sessions {
        let mood = if rng.random_bool(b.regular_flow_share) {
            None
        } else {
            Some(Mood::ALL[mood_dist.sample(&mut rng)])
        };
        let session_seed: u64 = rng.random();
        let mut t = day_start + rng.random_range(0..DAY - 4 * 3600);
        let length = 1 + length_dist.sample(&mut rng) as usize;
        let mut session = match crate::session::start_session(user_id, mood, deps, session_seed) {
            Ok(s) => s,
            Err(_) => {
                stats.sessions_failed += 1;
                continue;
            }
        };
        stats.sessions_started += 1;
        if session.fallback_active {
            stats.fallback_sessions += 1;
        }
        let session_id = format!("{user_id}-d{day:03}-{k}");
        for _ in 0..length {
            let song = match crate::session::next_track(&mut session, deps) {
                Ok(s) => s,
                Err(SessionError::Exhausted) => {
                    stats.sessions_exhausted += 1;
                    break;
                }
                Err(_) => {
                    stats.sessions_failed += 1;
                    break;
                }
            };
            streams.push(Stream {
                timestamp: t,
                user_id: user_id.to_string(),
                song_id: song.clone(),
                mood,
                session_id: session_id.clone(),
            });
            let affinity = deps.space.affinity(user_id, &song).unwrap_or(0.0);
            let p_skip = b.base_skip * (-b.skip_affinity_scale * affinity.max(0.0)).exp();
            let feedback = if rng.random_bool(p_skip.clamp(0.0, 1.0)) {
                stats.skips += 1;
                t += 30;
                Some(FeedbackKind::Skip)
            } else {
                t += 200;
                if rng.random_bool(b.like_probability) {
                    stats.likes += 1;
                    Some(FeedbackKind::Like)
                } else if rng.random_bool(b.exclude_artist_probability) {
                    stats.exclusions += 1;
                    Some(FeedbackKind::ExcludeArtist)
                } else {
                    None
                }
            };
            if let Some(kind) = feedback {
                let event = FeedbackEvent {
                    kind,
                    song_id: song,
                    timestamp: t,
                };
                if let Err(SessionError::Exhausted) = crate::session::apply_feedback(&mut session, &event, deps) {
                    stats.sessions_exhausted += 1;
                    break;
                }
            }
        }
    }
    (streams, stats)
}

pub fn simulate_days(
    catalog: &Catalog,
    deps: &SessionDeps,
    config: &SimConfig,
) -> Result<(StreamLog, SimStats), SimError> {
    let mut streams = Vec::new();
    let mut stats = SimStats::default();
    for day in 0..config.n_days {
        let per_user: Vec<(Vec<Stream>, SimStats)> = catalog
            .users()
            .par_iter()
            .enumerate()
            .map(|(i, u)| simulate_user_day(i, &u.user_id, day, deps, config))
            .collect();
        for (s, st) in per_user {
            streams.extend(s);
            stats.merge(&st);
        }
    }
    streams.sort();
    Ok((StreamLog { streams }, stats))
}

impl StreamLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp,user_id,song_id,mood,session_id\n");
        for s in &self.streams {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.timestamp,
                s.user_id,
                s.song_id,
                s.mood.map_or("", |m| m.name()),
                s.session_id
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), SimError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_csv().as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, SimError> {
        let reader = BufReader::new(File::open(path)?);
        let mut streams = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            if line.trim().is_empty() || (i == 0 && line.starts_with("timestamp")) {
                continue;
            }
            let err = |message: String| SimError::LogFormat { line: line_no, message };
            let f: Vec<&str> = line.split(',').collect();
            let [ts, user, song, mood, session] = f[..] else {
                return Err(err("expected 5 columns".into()));
            };
            streams.push(Stream {
                timestamp: ts.parse().map_err(|_| err(format!("bad timestamp {ts:?}")))?,
                user_id: user.to_string(),
                song_id: song.to_string(),
                mood: if mood.is_empty() {
                    None
                } else {
                    Some(mood.parse().map_err(|e: crate::mood::UnknownMood| err(e.to_string()))?)
                },
                session_id: session.to_string(),
            });
        }
        Ok(StreamLog { streams })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayDistribution {
    pub date: NaiveDate,
    pub total_streams: usize,
    pub mood_streams: usize,
    /// `None` marks a day with no mood-tagged streams.
    pub shares: Option<MoodMap<Real>>,
}

/// Per-day share of mood-tagged streams by mood, in date order.
pub fn mood_distribution(log: &StreamLog) -> Result<Vec<DayDistribution>, SimError> {
    if log.streams.is_empty() {
        return Err(SimError::EmptyLog);
    }
    let mut days: BTreeMap<NaiveDate, (usize, MoodMap<usize>)> = BTreeMap::new();
    for s in &log.streams {
        let entry = days.entry(date_of(s.timestamp)).or_insert((0, MoodMap::splat(0)));
        entry.0 += 1;
        if let Some(m) = s.mood {
            entry.1[m] += 1;
        }
    }
    Ok(days
        .into_iter()
        .map(|(date, (total, counts))| {
            let tagged: usize = counts.0.iter().sum();
            DayDistribution {
                date,
                total_streams: total,
                mood_streams: tagged,
                shares: (tagged > 0).then(|| MoodMap::from_fn(|m| counts[m] as Real / tagged as Real)),
            }
        })
        .collect())
}

/// CSV `day,mood,share`. A day without mood-tagged streams is a single
/// `day,none,` row.
pub fn distribution_csv(dist: &[DayDistribution]) -> String {
    let mut out = String::from("day,mood,share\n");
    for d in dist {
        match &d.shares {
            Some(shares) => {
                for (m, s) in shares.iter() {
                    let _ = writeln!(out, "{},{},{:.6}", d.date, m.name(), s);
                }
            }
            None => {
                let _ = writeln!(out, "{},none,", d.date);
            }
        }
    }
    out
}

/// Weekly shape of a distribution, as means of daily shares.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeeklyShape {
    /// Days on which Motivation had the largest share, out of `days`.
    pub motivation_top_days: usize,
    pub days: usize,
    pub party_fri_sun: Real,
    pub party_mon_thu: Real,
    pub focus_mon_fri: Real,
    pub focus_weekend: Real,
    pub chill_sunday: Real,
    pub chill_mean: Real,
}

impl WeeklyShape {
    pub fn motivation_top_every_day(&self) -> bool {
        self.days > 0 && self.motivation_top_days == self.days
    }

    pub fn party_weekend_spike(&self) -> bool {
        self.party_fri_sun > self.party_mon_thu
    }

    pub fn focus_on_weekdays(&self) -> bool {
        self.focus_mon_fri > self.focus_weekend
    }

    pub fn chill_sunday_uptick(&self) -> bool {
        self.chill_sunday >= self.chill_mean
    }
}

/// Summarizes days with mood-tagged streams. Means over an empty set of
/// days are NaN, which fails every comparison.
pub fn weekly_shape(dist: &[DayDistribution]) -> WeeklyShape {
    let days: Vec<(Weekday, &MoodMap<Real>)> = dist
        .iter()
        .filter_map(|d| Some((d.date.weekday(), d.shares.as_ref()?)))
        .collect();
    let mean = |mood: Mood, keep: &dyn Fn(Weekday) -> bool| {
        let picked: Vec<Real> = days.iter().filter(|(w, _)| keep(*w)).map(|(_, s)| s[mood]).collect();
        picked.iter().sum::<Real>() / picked.len() as Real
    };
    use Weekday::*;
    WeeklyShape {
        motivation_top_days: days
            .iter()
            .filter(|(_, s)| {
                Mood::ALL
                    .iter()
                    .all(|&m| m == Mood::Motivation || s[Mood::Motivation] > s[m])
            })
            .count(),
        days: days.len(),
        party_fri_sun: mean(Mood::Party, &|w| matches!(w, Fri | Sat | Sun)),
        party_mon_thu: mean(Mood::Party, &|w| matches!(w, Mon | Tue | Wed | Thu)),
        focus_mon_fri: mean(Mood::Focus, &|w| !matches!(w, Sat | Sun)),
        focus_weekend: mean(Mood::Focus, &|w| matches!(w, Sat | Sun)),
        chill_sunday: mean(Mood::Chill, &|w| w == Sun),
        chill_mean: mean(Mood::Chill, &|_| true),
    }
}
