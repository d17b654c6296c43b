#![allow(dead_code)]

use std::collections::BTreeSet;

use flowmoods::catalog::{Artist, Song, User};
use flowmoods::{Catalog, InteractionEvent};

pub fn uid(u: usize) -> String {
    format!("u{u:04}")
}

pub fn sid(s: usize) -> String {
    format!("s{s:05}")
}

pub fn aid(a: usize) -> String {
    format!("a{a:03}")
}

pub fn event(u: usize, s: usize, weight: f64) -> InteractionEvent {
    InteractionEvent {
        user_id: uid(u),
        song_id: sid(s),
        weight,
        timestamp: 0,
    }
}

/// Songs are spread round-robin over `n_artists`; no audio embeddings.
pub fn plain_catalog(n_users: usize, n_songs: usize, n_artists: usize) -> Catalog {
    let artists = (0..n_artists)
        .map(|a| Artist {
            artist_id: aid(a),
            name: format!("Artist {a}"),
        })
        .collect();
    let songs = (0..n_songs)
        .map(|s| Song {
            song_id: sid(s),
            artist_id: aid(s % n_artists),
            title: format!("Song {s}"),
            audio_embedding: None,
        })
        .collect();
    let users = (0..n_users)
        .map(|u| User {
            user_id: uid(u),
            favorite_song_ids: BTreeSet::new(),
            favorite_artist_ids: BTreeSet::new(),
        })
        .collect();
    Catalog::new(artists, songs, users).unwrap()
}

pub mod sessions {
    use std::collections::{BTreeSet, HashMap};
    use std::sync::Arc;

    use flowmoods::ann_index::{build_index, IndexConfig};
    use flowmoods::catalog::{Artist, Song, User};
    use flowmoods::cf_embedding::{Factors, TrainingConfig};
    use flowmoods::session::{build_fallback_pools, FallbackPool, SessionConfig, SessionDeps};
    use flowmoods::{Catalog, EmbeddingSpace, Mood, MoodScoreTable};
    use rand::seq::index::sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::{aid, sid, uid};

    pub const COLD_USER: &str = "cold";

    pub struct World {
        pub catalog: Catalog,
        pub space: EmbeddingSpace,
        pub scores: MoodScoreTable,
    }

    /// `n_users` users with vectors and 16 favorite songs each, plus a
    /// [`COLD_USER`] with favorites but no vector. Scores are uniform in [0, 1].
    pub fn random_world(n_users: usize, n_songs: usize, n_artists: usize, dim: usize, seed: u64) -> World {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let artists = (0..n_artists)
            .map(|a| Artist {
                artist_id: aid(a),
                name: format!("Artist {a}"),
            })
            .collect();
        let songs = (0..n_songs)
            .map(|s| Song {
                song_id: sid(s),
                artist_id: aid(rng.random_range(0..n_artists)),
                title: format!("Song {s}"),
                audio_embedding: None,
            })
            .collect();
        let favorites = |rng: &mut ChaCha8Rng| -> BTreeSet<String> {
            sample(rng, n_songs, 16.min(n_songs)).into_iter().map(sid).collect()
        };
        let mut users: Vec<User> = (0..n_users)
            .map(|u| User {
                user_id: uid(u),
                favorite_song_ids: favorites(&mut rng),
                favorite_artist_ids: BTreeSet::new(),
            })
            .collect();
        users.push(User {
            user_id: COLD_USER.into(),
            favorite_song_ids: favorites(&mut rng),
            favorite_artist_ids: BTreeSet::new(),
        });
        let catalog = Catalog::new(artists, songs, users).unwrap();

        let scale = 1.0 / (dim as f64).sqrt();
        let mut gauss = |n: usize| -> Vec<f64> {
            (0..n * dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect()
        };
        let space = EmbeddingSpace {
            dimension: dim,
            users: Factors::new((0..n_users).map(uid).collect(), dim, gauss(n_users)),
            songs: Factors::new((0..n_songs).map(sid).collect(), dim, gauss(n_songs)),
            config: TrainingConfig::default(),
            seed,
            model_version: "test".into(),
        };
        let mut scores = MoodScoreTable::new("test");
        for s in 0..n_songs {
            for m in Mood::ALL {
                scores.insert(&sid(s), m, rng.random::<f64>());
            }
        }
        World { catalog, space, scores }
    }

    pub fn popularity_of(catalog: &Catalog) -> HashMap<String, f64> {
        // deterministic, distinct popularity: later songs are more popular
        catalog
            .songs()
            .iter()
            .enumerate()
            .map(|(i, s)| (s.song_id.clone(), i as f64))
            .collect()
    }

    pub fn deps(world: &World, config: SessionConfig) -> SessionDeps {
        let fallback = build_fallback_pools(&world.scores, &popularity_of(&world.catalog), 200, &config.thresholds)
            .unwrap_or_default();
        deps_with_fallback(world, config, fallback)
    }

    pub fn deps_with_fallback(world: &World, config: SessionConfig, fallback: FallbackPool) -> SessionDeps {
        let n_cells = (world.space.songs.len() as f64).sqrt().ceil() as usize;
        let index = build_index(
            world.space.songs.iter(),
            IndexConfig {
                n_cells: Some(n_cells),
                seed: 1,
            },
        )
        .unwrap();
        SessionDeps {
            catalog: Arc::new(world.catalog.clone()),
            space: Arc::new(world.space.clone()),
            index: Arc::new(index),
            scores: Arc::new(world.scores.clone()),
            fallback: Arc::new(fallback),
            config,
        }
    }
}
