//! Catalog entities and their on-disk formats.
//!
//! * catalog file: one JSON object per line, tagged by `"kind"`
//!   (`artist`, `song`, `user`);
//! * interactions file: CSV `user_id,song_id,weight,timestamp`;
//! * labels file: CSV `song_id,mood,label` with `label` in `{0,1}`.
//!
//! A header row is optional in both CSV formats.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::mood::Mood;
use crate::Real;

pub const AUDIO_EMBEDDING_DIM: usize = 256;

/// Minimum favorite songs plus favorite artists for the Flow button to show.
pub const FLOW_ELIGIBILITY_THRESHOLD: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artist {
    pub artist_id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Song {
    pub song_id: String,
    pub artist_id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_embedding: Option<Vec<Real>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct User {
    pub user_id: String,
    #[serde(default)]
    pub favorite_song_ids: BTreeSet<String>,
    #[serde(default)]
    pub favorite_artist_ids: BTreeSet<String>,
}

impl User {
    pub fn favorite_count(&self) -> usize {
        self.favorite_song_ids.len() + self.favorite_artist_ids.len()
    }
}

pub fn eligible_for_flow(user: &User) -> bool {
    eligible_for_flow_with(user, FLOW_ELIGIBILITY_THRESHOLD)
}

/// The threshold applies to the sum of favorite songs and favorite artists.
pub fn eligible_for_flow_with(user: &User, threshold: usize) -> bool {
    user.favorite_count() >= threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub user_id: String,
    pub song_id: String,
    pub weight: Real,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn is_positive(self) -> bool {
        matches!(self, Label::Positive)
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoodLabel {
    pub song_id: String,
    pub mood: Mood,
    pub label: Label,
}

/// Position of an offending record, when it came from a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Loc(pub Option<usize>);

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(line) => write!(f, "line {line}: "),
            None => Ok(()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{loc}malformed record: {message}")]
    Malformed { loc: Loc, message: String },
    #[error("{loc}duplicate song_id {song_id:?}")]
    DuplicateSong { loc: Loc, song_id: String },
    #[error("{loc}duplicate artist_id {artist_id:?}")]
    DuplicateArtist { loc: Loc, artist_id: String },
    #[error("{loc}duplicate user_id {user_id:?}")]
    DuplicateUser { loc: Loc, user_id: String },
    #[error("{loc}song {song_id:?} references unknown artist {artist_id:?}")]
    DanglingArtist {
        loc: Loc,
        song_id: String,
        artist_id: String,
    },
    #[error("{loc}user {user_id:?} lists unknown favorite {favorite:?}")]
    DanglingFavorite {
        loc: Loc,
        user_id: String,
        favorite: String,
    },
    #[error("{loc}song {song_id:?} has a {found}-dimensional audio embedding, expected {AUDIO_EMBEDDING_DIM}")]
    EmbeddingDimension {
        loc: Loc,
        song_id: String,
        found: usize,
    },
    #[error("{loc}song {song_id:?} has a non-finite audio embedding value")]
    NonFiniteEmbedding { loc: Loc, song_id: String },
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Artist(Artist),
    Song(Song),
    User(User),
}

/// Immutable, referentially consistent collection of songs, artists and users.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    songs: Vec<Song>,
    artists: Vec<Artist>,
    users: Vec<User>,
    song_index: HashMap<String, usize>,
    artist_index: HashMap<String, usize>,
    user_index: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(artists: Vec<Artist>, songs: Vec<Song>, users: Vec<User>) -> Result<Self, CatalogError> {
        let n_a = artists.len();
        let n_s = songs.len();
        let n_u = users.len();
        Self::build(
            artists,
            songs,
            users,
            &vec![None; n_a],
            &vec![None; n_s],
            &vec![None; n_u],
        )
    }

    fn build(
        artists: Vec<Artist>,
        songs: Vec<Song>,
        users: Vec<User>,
        artist_lines: &[Option<usize>],
        song_lines: &[Option<usize>],
        user_lines: &[Option<usize>],
    ) -> Result<Self, CatalogError> {
        let mut artist_index = HashMap::with_capacity(artists.len());
        for (i, a) in artists.iter().enumerate() {
            if artist_index.insert(a.artist_id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateArtist {
                    loc: Loc(artist_lines[i]),
                    artist_id: a.artist_id.clone(),
                });
            }
        }
        let mut song_index = HashMap::with_capacity(songs.len());
        for (i, s) in songs.iter().enumerate() {
            let loc = Loc(song_lines[i]);
            if song_index.insert(s.song_id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateSong {
                    loc,
                    song_id: s.song_id.clone(),
                });
            }
            if let Some(e) = &s.audio_embedding {
                if e.len() != AUDIO_EMBEDDING_DIM {
                    return Err(CatalogError::EmbeddingDimension {
                        loc,
                        song_id: s.song_id.clone(),
                        found: e.len(),
                    });
                }
                if e.iter().any(|x| !x.is_finite()) {
                    return Err(CatalogError::NonFiniteEmbedding {
                        loc,
                        song_id: s.song_id.clone(),
                    });
                }
            }
        }
        for (i, s) in songs.iter().enumerate() {
            if !artist_index.contains_key(&s.artist_id) {
                return Err(CatalogError::DanglingArtist {
                    loc: Loc(song_lines[i]),
                    song_id: s.song_id.clone(),
                    artist_id: s.artist_id.clone(),
                });
            }
        }
        let mut user_index = HashMap::with_capacity(users.len());
        for (i, u) in users.iter().enumerate() {
            let loc = Loc(user_lines[i]);
            if user_index.insert(u.user_id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateUser {
                    loc,
                    user_id: u.user_id.clone(),
                });
            }
            let dangling = u
                .favorite_song_ids
                .iter()
                .find(|id| !song_index.contains_key(*id))
                .or_else(|| u.favorite_artist_ids.iter().find(|id| !artist_index.contains_key(*id)));
            if let Some(fav) = dangling {
                return Err(CatalogError::DanglingFavorite {
                    loc,
                    user_id: u.user_id.clone(),
                    favorite: fav.clone(),
                });
            }
        }
        Ok(Catalog {
            songs,
            artists,
            users,
            song_index,
            artist_index,
            user_index,
        })
    }

    pub fn songs(&self) -> &[Song] {
        &self.songs
    }

    pub fn artists(&self) -> &[Artist] {
        &self.artists
    }

    pub fn users(&self) -> &[User] {
        &self.users
    }

    pub fn song(&self, id: &str) -> Option<&Song> {
        self.song_index.get(id).map(|&i| &self.songs[i])
    }

    pub fn artist(&self, id: &str) -> Option<&Artist> {
        self.artist_index.get(id).map(|&i| &self.artists[i])
    }

    pub fn user(&self, id: &str) -> Option<&User> {
        self.user_index.get(id).map(|&i| &self.users[i])
    }

    /// (songs, artists, users)
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.songs.len(), self.artists.len(), self.users.len())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), CatalogError> {
        let io = |source| CatalogError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let mut emit = |rec: &Record| -> std::io::Result<()> {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")
        };
        for a in &self.artists {
            emit(&Record::Artist(a.clone())).map_err(io)?;
        }
        for s in &self.songs {
            emit(&Record::Song(s.clone())).map_err(io)?;
        }
        for u in &self.users {
            emit(&Record::User(u.clone())).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

pub fn load_catalog(path: &Path) -> Result<Catalog, CatalogError> {
    let io = |source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let (mut artists, mut songs, mut users) = (Vec::new(), Vec::new(), Vec::new());
    let (mut a_lines, mut s_lines, mut u_lines) = (Vec::new(), Vec::new(), Vec::new());
    let mut seen_songs: HashSet<String> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| CatalogError::Malformed {
            loc: Loc(Some(line_no)),
            message: e.to_string(),
        })?;
        match rec {
            Record::Artist(a) => {
                artists.push(a);
                a_lines.push(Some(line_no));
            }
            Record::Song(s) => {
                // Report duplicates at the second occurrence as soon as it is read.
                if !seen_songs.insert(s.song_id.clone()) {
                    return Err(CatalogError::DuplicateSong {
                        loc: Loc(Some(line_no)),
                        song_id: s.song_id,
                    });
                }
                songs.push(s);
                s_lines.push(Some(line_no));
            }
            Record::User(u) => {
                users.push(u);
                u_lines.push(Some(line_no));
            }
        }
    }
    Catalog::build(artists, songs, users, &a_lines, &s_lines, &u_lines)
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestWarning {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct InteractionLoad {
    /// Sorted by timestamp ascending; ties keep file order.
    pub events: Vec<InteractionEvent>,
    pub warnings: Vec<IngestWarning>,
}

fn csv_rows(path: &Path) -> Result<Vec<(usize, csv::StringRecord)>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IngestError::Row {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn expect_fields(line: usize, rec: &csv::StringRecord, n: usize) -> Result<(), IngestError> {
    if rec.len() != n {
        return Err(IngestError::Row {
            line,
            message: format!("expected {n} columns, found {}", rec.len()),
        });
    }
    Ok(())
}

pub fn load_interactions(path: &Path, catalog: &Catalog) -> Result<InteractionLoad, IngestError> {
    let mut load = InteractionLoad::default();
    for (idx, (line, rec)) in csv_rows(path)?.into_iter().enumerate() {
        if idx == 0 && rec.get(0) == Some("user_id") {
            continue;
        }
        expect_fields(line, &rec, 4)?;
        let weight: Real = rec[2].parse().map_err(|_| IngestError::Row {
            line,
            message: format!("weight {:?} is not a number", &rec[2]),
        })?;
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(IngestError::Row {
                line,
                message: format!("weight {weight} must be finite and non-negative"),
            });
        }
        let timestamp: i64 = rec[3].parse().map_err(|_| IngestError::Row {
            line,
            message: format!("timestamp {:?} is not an integer", &rec[3]),
        })?;
        let (user_id, song_id) = (rec[0].to_string(), rec[1].to_string());
        if catalog.user(&user_id).is_none() {
            load.warnings.push(IngestWarning {
                line,
                reason: format!("unknown user {user_id:?}"),
            });
            continue;
        }
        if catalog.song(&song_id).is_none() {
            load.warnings.push(IngestWarning {
                line,
                reason: format!("unknown song {song_id:?}"),
            });
            continue;
        }
        load.events.push(InteractionEvent {
            user_id,
            song_id,
            weight,
            timestamp,
        });
    }
    load.events.sort_by_key(|e| e.timestamp);
    Ok(load)
}

pub fn write_interactions(path: &Path, events: &[InteractionEvent]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "user_id,song_id,weight,timestamp")?;
    for e in events {
        writeln!(w, "{},{},{},{}", e.user_id, e.song_id, e.weight, e.timestamp)?;
    }
    w.flush()
}

pub fn load_labels(path: &Path, catalog: &Catalog) -> Result<Vec<MoodLabel>, IngestError> {
    let mut labels = Vec::new();
    let mut seen: HashSet<(String, Mood)> = HashSet::new();
    for (idx, (line, rec)) in csv_rows(path)?.into_iter().enumerate() {
        if idx == 0 && rec.get(0) == Some("song_id") {
            continue;
        }
        expect_fields(line, &rec, 3)?;
        let song_id = rec[0].to_string();
        if catalog.song(&song_id).is_none() {
            return Err(IngestError::Row {
                line,
                message: format!("unknown song {song_id:?}"),
            });
        }
        let mood: Mood = rec[1].parse().map_err(|e: crate::mood::UnknownMood| IngestError::Row {
            line,
            message: e.to_string(),
        })?;
        let label = match &rec[2] {
            "1" => Label::Positive,
            "0" => Label::Negative,
            other => {
                return Err(IngestError::Row {
                    line,
                    message: format!("label {other:?} must be 0 or 1"),
                })
            }
        };
        if !seen.insert((song_id.clone(), mood)) {
            return Err(IngestError::Row {
                line,
                message: format!("second label for ({song_id}, {mood})"),
            });
        }
        labels.push(MoodLabel { song_id, mood, label });
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[MoodLabel]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "song_id,mood,label")?;
    for l in labels {
        writeln!(w, "{},{},{}", l.song_id, l.mood.name(), u8::from(l.label.is_positive()))?;
    }
    w.flush()
}
