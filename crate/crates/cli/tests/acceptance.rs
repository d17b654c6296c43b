//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeSet, HashSet};
use std::panic::AssertUnwindSafe;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use flowmoods::ann_index::{build_index, recall_at_k, IndexConfig};
use flowmoods::catalog::{Artist, Song, User, AUDIO_EMBEDDING_DIM};
use flowmoods::cf_embedding::{train_embeddings, TrainingConfig};
use flowmoods::mood_classifier::score_catalog;
use flowmoods::pipeline::{build_artifacts, evaluate_models, train_mood_models, Artifacts, PipelineConfig};
use flowmoods::session::{
    apply_feedback, build_fallback_pools, candidate_pool, next_track, start_session, Blocklist, FeedbackEvent,
    FeedbackKind, SessionConfig, SessionDeps, SessionError,
};
use flowmoods::simulator::{generate_world, mood_distribution, popularity, simulate_days, weekly_shape, SimConfig, World};
use flowmoods::{Catalog, InteractionEvent, Label, Mood, MoodModels};
use flowmoods_service::{FeedbackRequest, ServiceConfig, ServiceState, StartRequest};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Verdict = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Report {
    failed: Vec<&'static str>,
}

impl Report {
    fn check(&mut self, name: &'static str, f: impl FnOnce() -> Verdict) {
        let started = Instant::now();
        let verdict = std::panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("PASS {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                println!("FAIL {name}: {d} [{secs:.1}s]");
                self.failed.push(name);
            }
        }
    }
}

fn classification(world: &World, models: &mut Option<MoodModels>) -> Verdict {
    let config = PipelineConfig::default();
    let dims_ok = world
        .catalog
        .songs()
        .iter()
        .all(|s| s.audio_embedding.as_ref().is_some_and(|e| e.len() == AUDIO_EMBEDDING_DIM));
    let mut min_class = usize::MAX;
    for mood in Mood::ALL {
        let (pos, neg) = world
            .labels
            .iter()
            .filter(|l| l.mood == mood)
            .fold((0, 0), |(p, n), l| if l.label == Label::Positive { (p + 1, n) } else { (p, n + 1) });
        min_class = min_class.min(pos).min(neg);
    }
    let started = Instant::now();
    let trained = train_mood_models(
        &world.catalog,
        &world.labels,
        &config.forest,
        config.holdout_fraction,
        config.seed,
        &config.model_version,
    )
    .map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    let metrics = evaluate_models(&trained, &world.catalog, &world.labels).map_err(|e| e.to_string())?;
    let aucs: Vec<String> = metrics.iter().map(|(m, e)| format!("{}={:.4}", m.id(), e.auc)).collect();
    let min_auc = metrics.iter().map(|(_, e)| e.auc).fold(f64::INFINITY, f64::min);
    *models = Some(trained);
    ensure(
        dims_ok && min_class >= 100 && min_auc >= 0.95 && secs < 60.0,
        format!(
            "{} songs, 256-d={dims_ok}, min class size {min_class}, AUC {} (min {min_auc:.4} >= 0.95), \
             training {secs:.1}s < 60s",
            world.catalog.songs().len(),
            aucs.join(" ")
        ),
    )
}

fn score_range(world: &World, models: &MoodModels) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut out_of_range = 0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..10_000 {
        // mostly wide gaussians, plus a few degenerate inputs
        let x: Vec<f64> = match i % 100 {
            0 => vec![0.0; AUDIO_EMBEDDING_DIM],
            1 => vec![1e9; AUDIO_EMBEDDING_DIM],
            2 => vec![-1e9; AUDIO_EMBEDDING_DIM],
            _ => {
                let scale = [0.1, 1.0, 10.0][i % 3];
                (0..AUDIO_EMBEDDING_DIM)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        scale * z
                    })
                    .collect()
            }
        };
        for f in &models.forests {
            let s = f.score(&x).map_err(|e| e.to_string())?;
            lo = lo.min(s);
            hi = hi.max(s);
            if !(0.0..=1.0).contains(&s) {
                out_of_range += 1;
            }
        }
    }
    let config = PipelineConfig::default();
    let again = train_mood_models(
        &world.catalog,
        &world.labels,
        &config.forest,
        config.holdout_fraction,
        config.seed,
        &config.model_version,
    )
    .map_err(|e| e.to_string())?;
    let identical = serde_json::to_string(&again).unwrap() == serde_json::to_string(models).unwrap();
    let (a, _) = score_catalog(&models.forests, &world.catalog, "x").map_err(|e| e.to_string())?;
    let (b, _) = score_catalog(&again.forests, &world.catalog, "x").map_err(|e| e.to_string())?;
    ensure(
        out_of_range == 0 && identical && a.to_csv() == b.to_csv(),
        format!(
            "60000 fuzzed scores in [{lo:.4}, {hi:.4}], {out_of_range} outside [0,1]; \
             retrained forests bit-identical={identical}, score tables identical={}",
            a.to_csv() == b.to_csv()
        ),
    )
}

fn ann_quality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gaussian = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..64).map(|_| StandardNormal.sample(rng)).collect() };
    let centers: Vec<Vec<f64>> = (0..100).map(|_| gaussian(&mut rng)).collect();
    let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let c = &centers[rng.random_range(0..100)];
        c.iter()
            .map(|x| {
                let z: f64 = StandardNormal.sample(rng);
                x + 0.3 * z
            })
            .collect()
    };
    let vectors: Vec<Vec<f64>> = (0..10_000).map(|_| sample(&mut rng)).collect();
    let queries: Vec<Vec<f64>> = (0..200).map(|_| sample(&mut rng)).collect();
    let ids: Vec<String> = (0..vectors.len()).map(|i| format!("s{i:05}")).collect();
    let index = build_index(
        ids.iter().map(String::as_str).zip(vectors.iter().map(Vec::as_slice)),
        IndexConfig { n_cells: Some(100), seed: 3 },
    )
    .map_err(|e| e.to_string())?;
    let recall_8 = recall_at_k(&index, &queries, 50, 8).map_err(|e| e.to_string())?;
    let recall_all = recall_at_k(&index, &queries, 50, index.n_cells()).map_err(|e| e.to_string())?;
    let mut lat: Vec<Duration> = queries
        .iter()
        .map(|q| {
            let t = Instant::now();
            let r = index.query(q, 50, 8).unwrap();
            let d = t.elapsed();
            assert_eq!(r.len(), 50);
            d
        })
        .collect();
    lat.sort();
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    let worst = *lat.last().unwrap();
    ensure(
        recall_8 >= 0.9 && recall_all == 1.0 && worst < Duration::from_millis(5),
        format!(
            "10000x64, 100 cells: recall@50 {recall_8:.4} at n_probe=8 (>= 0.9), {recall_all:.4} at n_probe=100 (= 1), \
             latency p50 {:.3}ms max {:.3}ms (< 5ms)",
            ms(lat[lat.len() / 2]),
            ms(worst)
        ),
    )
}

fn plain_catalog(n_users: usize, n_songs: usize, n_artists: usize) -> Catalog {
    let artists = (0..n_artists)
        .map(|a| Artist {
            artist_id: format!("a{a}"),
            name: format!("Artist {a}"),
        })
        .collect();
    let songs = (0..n_songs)
        .map(|s| Song {
            song_id: format!("s{s:03}"),
            artist_id: format!("a{}", s % n_artists),
            title: format!("Song {s}"),
            audio_embedding: None,
        })
        .collect();
    let users = (0..n_users)
        .map(|u| User {
            user_id: format!("u{u:03}"),
            favorite_song_ids: BTreeSet::new(),
            favorite_artist_ids: BTreeSet::new(),
        })
        .collect();
    Catalog::new(artists, songs, users).unwrap()
}

fn embedding_sanity() -> Verdict {
    // two groups of 20 users, each streaming only its own 30 songs
    let catalog = plain_catalog(40, 60, 6);
    let mut events = Vec::new();
    for u in 0..40 {
        let block = u / 20;
        for k in 0..30 {
            if (u * 7 + k) % 3 != 0 {
                events.push(InteractionEvent {
                    user_id: format!("u{u:03}"),
                    song_id: format!("s{:03}", block * 30 + k),
                    weight: 1.0 + ((u + k) % 4) as f64,
                    timestamp: 0,
                });
            }
        }
    }
    let config = TrainingConfig {
        dimension: 8,
        epochs: 15,
        seed: 11,
        ..Default::default()
    };
    let (space, report) = train_embeddings::<f64>(&events, &catalog, &config).map_err(|e| e.to_string())?;
    let mut own = 0;
    for u in 0..40 {
        let mut ranked: Vec<(f64, usize)> = (0..60)
            .map(|s| (space.affinity(&format!("u{u:03}"), &format!("s{s:03}")).unwrap(), s))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        own += ranked[..10].iter().filter(|&&(_, s)| s / 30 == u / 20).count();
    }
    let share = own as f64 / 400.0;
    let rises = report
        .objective_history
        .windows(2)
        .filter(|w| w[1] > w[0] + 1e-9)
        .count();
    ensure(
        share >= 0.8 && rises == 0,
        format!(
            "{:.1}% of users' top-10 songs in their own block (>= 80%), objective {:.3} -> {:.3} with {rises} rises over {} epochs",
            share * 100.0,
            report.objective_history[0],
            report.objective_history.last().unwrap(),
            report.objective_history.len() - 1
        ),
    )
}

/// Plays one session with random interleaved feedback, checking every
/// invariant after each step. Returns the played songs.
fn fuzz_session(user: &str, mood: Mood, seed: u64, d: &SessionDeps) -> Result<Vec<String>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF00D);
    let mut s = start_session(user, Some(mood), d, seed).map_err(|e| format!("{user} {mood}: {e}"))?;
    let mut played: Vec<String> = Vec::new();
    let mut banned_artists = HashSet::new();
    let mut banned_songs = HashSet::new();
    let fail = |what: String| format!("{user} {mood} seed {seed}: {what}");
    for _ in 0..200 {
        let song = match next_track(&mut s, d) {
            Ok(song) => song,
            Err(SessionError::Exhausted) => break,
            Err(e) => return Err(fail(e.to_string())),
        };
        let artist = d.catalog.song(&song).unwrap().artist_id.clone();
        if d.scores.get(&song, mood).is_none_or(|x| x < d.config.thresholds[mood]) {
            return Err(fail(format!("{song} below threshold")));
        }
        if banned_artists.contains(&artist) || banned_songs.contains(&song) {
            return Err(fail(format!("{song} played after exclusion")));
        }
        let window = &played[played.len().saturating_sub(d.config.no_repeat_window)..];
        if window.contains(&song) {
            return Err(fail(format!("{song} repeated inside the window")));
        }
        played.push(song);
        if rng.random_bool(0.35) {
            let target = played[rng.random_range(0..played.len())].clone();
            let kind = [
                FeedbackKind::Like,
                FeedbackKind::Like,
                FeedbackKind::Skip,
                FeedbackKind::Skip,
                FeedbackKind::ExcludeSong,
                FeedbackKind::ExcludeArtist,
            ][rng.random_range(0..6)];
            let event = FeedbackEvent {
                kind,
                song_id: target.clone(),
                timestamp: played.len() as i64,
            };
            match apply_feedback(&mut s, &event, d) {
                Ok(_) => match kind {
                    FeedbackKind::Skip | FeedbackKind::ExcludeSong => {
                        banned_songs.insert(target);
                    }
                    FeedbackKind::ExcludeArtist => {
                        banned_artists.insert(d.catalog.song(&target).unwrap().artist_id.clone());
                    }
                    FeedbackKind::Like => {}
                },
                Err(SessionError::Exhausted) => break,
                Err(e) => return Err(fail(e.to_string())),
            }
        }
        s.check_invariants(d).map_err(fail)?;
    }
    Ok(played)
}

fn session_fuzz(artifacts: &Artifacts) -> Verdict {
    let d = artifacts.deps(SessionConfig::default());
    let mut users: Vec<&str> = artifacts.catalog.users().iter().map(|u| u.user_id.as_str()).collect();
    users.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
    let (mut sessions, mut calls, mut short) = (0, 0, 0);
    for (i, user) in users.iter().take(100).enumerate() {
        for mood in Mood::ALL {
            let seed = (i * 6 + mood.index()) as u64;
            let first = fuzz_session(user, mood, seed, &d)?;
            let replay = fuzz_session(user, mood, seed, &d)?;
            if first != replay {
                return Err(format!("{user} {mood}: replay diverged"));
            }
            sessions += 1;
            calls += first.len();
            short += usize::from(first.len() < 200);
        }
    }
    ensure(
        sessions == 600,
        format!("{sessions} sessions, {calls} tracks, {short} exhausted early; 0 violations, replays identical"),
    )
}

fn fallback(artifacts: &Artifacts) -> Verdict {
    let mut users = artifacts.catalog.users().to_vec();
    users.push(User {
        user_id: "cold".into(),
        favorite_song_ids: artifacts.catalog.songs()[..16].iter().map(|s| s.song_id.clone()).collect(),
        favorite_artist_ids: BTreeSet::new(),
    });
    let catalog = Catalog::new(
        artifacts.catalog.artists().to_vec(),
        artifacts.catalog.songs().to_vec(),
        users,
    )
    .map_err(|e| e.to_string())?;
    let mut d = artifacts.deps(SessionConfig::default());
    d.catalog = Arc::new(catalog);
    if d.space.user_vector("cold").is_some() {
        return Err("cold user has a vector".into());
    }
    let mut s = start_session("cold", Some(Mood::Party), &d, 1).map_err(|e| e.to_string())?;
    let pool: HashSet<&str> = d.fallback.pool(Mood::Party).iter().map(String::as_str).collect();
    let mut from_pool = 0;
    for _ in 0..200 {
        let song = next_track(&mut s, &d).map_err(|e| e.to_string())?;
        from_pool += usize::from(pool.contains(song.as_str()));
    }
    let cold_ok = s.fallback_active && from_pool == 200;

    // fallback_active exactly when fewer than min_candidates pass the filters
    let (mut agree, mut triggered, mut total) = (0, 0, 0);
    for config in [
        SessionConfig::default(),
        SessionConfig {
            min_candidates: 150,
            ..Default::default()
        },
    ] {
        let d = artifacts.deps(config);
        for user in artifacts.catalog.users().iter().take(50) {
            for mood in Mood::ALL {
                let passing = candidate_pool(&user.user_id, Some(mood), &d, &Blocklist::default())
                    .map_err(|e| e.to_string())?
                    .len();
                let s = start_session(&user.user_id, Some(mood), &d, 0).map_err(|e| e.to_string())?;
                let expected = passing < d.config.min_candidates;
                agree += usize::from(s.fallback_active == expected);
                triggered += usize::from(s.fallback_active);
                total += 1;
            }
        }
    }
    ensure(
        cold_ok && agree == total && triggered > 0,
        format!(
            "cold user: fallback_active={}, {from_pool}/200 Party tracks from the pool; \
             {agree}/{total} starts flag fallback iff passing < min_candidates ({triggered} flagged)",
            s.fallback_active
        ),
    )
}

fn weekly_distribution(artifacts: &Artifacts, setup: Duration) -> Verdict {
    let started = Instant::now();
    let config = SimConfig::default();
    let d = artifacts.deps(SessionConfig::default());
    let (log, _) = simulate_days(&artifacts.catalog, &d, &config).map_err(|e| e.to_string())?;
    let dist = mood_distribution(&log).map_err(|e| e.to_string())?;
    let runtime = setup + started.elapsed();
    let min_day = dist.iter().map(|x| x.total_streams).min().unwrap_or(0);
    let shape = weekly_shape(&dist);
    ensure(
        dist.len() == 14
            && min_day >= 10_000
            && shape.motivation_top_every_day()
            && shape.party_weekend_spike()
            && shape.focus_on_weekdays()
            && shape.chill_sunday_uptick()
            && runtime < Duration::from_secs(300),
        format!(
            "{} days, >= {min_day} streams/day; motivation top {}/{} days; party Fri-Sun {:.4} > Mon-Thu {:.4}; \
             focus Mon-Fri {:.4} > Sat-Sun {:.4}; chill Sunday {:.4} >= mean {:.4}; end-to-end {:.0}s < 300s",
            dist.len(),
            shape.motivation_top_days,
            shape.days,
            shape.party_fri_sun,
            shape.party_mon_thu,
            shape.focus_mon_fri,
            shape.focus_weekend,
            shape.chill_sunday,
            shape.chill_mean,
            runtime.as_secs_f64()
        ),
    )
}

/// Same embeddings and index as `v1`, forests retrained under another seed.
fn second_version(v1: &Artifacts, world: &World) -> Artifacts {
    let config = PipelineConfig::default();
    let models = train_mood_models(
        &v1.catalog,
        &world.labels,
        &config.forest,
        config.holdout_fraction,
        config.seed + 1,
        "v2",
    )
    .unwrap();
    let (scores, _) = score_catalog(&models.forests, &v1.catalog, "v2").unwrap();
    let fallback = build_fallback_pools(
        &scores,
        &popularity(&world.interactions),
        config.fallback_size,
        &config.session.thresholds,
    )
    .unwrap();
    let mut space = (*v1.space).clone();
    space.model_version = "v2".into();
    let mut index = (*v1.index).clone();
    index.model_version = "v2".into();
    Artifacts {
        catalog: v1.catalog.clone(),
        space: Arc::new(space),
        models: Arc::new(models),
        scores: Arc::new(scores),
        index: Arc::new(index),
        fallback: Arc::new(fallback),
    }
}

fn start(state: &ServiceState, user: &str, mood: Mood, seed: Option<u64>) -> flowmoods_service::StartResponse {
    state
        .start(&StartRequest {
            user_id: user.to_string(),
            mood: Some(mood.id().to_string()),
            seed,
        })
        .unwrap()
}

fn service_stress(v1: &Artifacts, v2: &Artifacts, dirs: [&Path; 2]) -> Verdict {
    let users: Vec<String> = v1.catalog.users().iter().map(|u| u.user_id.clone()).collect();

    // 100 concurrent sessions of 100 steps
    let state = ServiceState::new(v1.clone(), ServiceConfig::default()).map_err(|e| e.to_string())?;
    let steps: usize = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..100)
            .map(|i| {
                let (state, users) = (&state, &users);
                scope.spawn(move || {
                    let mood = Mood::ALL[i % 6];
                    let first = start(state, &users[i * 7 % users.len()], mood, Some(i as u64));
                    let id = first.session_id;
                    let mut played = vec![first.track.song_id];
                    let mut banned = HashSet::new();
                    for step in 0..100 {
                        let next = match state.next(&id) {
                            Ok(n) => n,
                            Err(e) if e.code == "session_exhausted" => break,
                            Err(e) => panic!("{id}: {e}"),
                        };
                        let t = next.track;
                        assert!(!banned.contains(&t.artist_id), "{id}: excluded artist played");
                        assert!(!played[played.len().saturating_sub(100)..].contains(&t.song_id), "{id}: repeat");
                        assert!(t.mood_score.is_some_and(|s| s >= 0.5), "{id}: impure track");
                        played.push(t.song_id.clone());
                        let kind = match step % 10 {
                            3 => FeedbackKind::Like,
                            5 => FeedbackKind::Skip,
                            8 if step % 40 == 8 => FeedbackKind::ExcludeArtist,
                            _ => continue,
                        };
                        let req = FeedbackRequest {
                            event_id: format!("{id}-{step}"),
                            kind,
                            song_id: t.song_id.clone(),
                            timestamp: None,
                        };
                        state.feedback(&id, &req).unwrap();
                        // a retried event is a no-op
                        state.feedback(&id, &req).unwrap();
                        if kind == FeedbackKind::ExcludeArtist {
                            banned.insert(t.artist_id);
                        }
                    }
                    played.len() - 1
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).sum()
    });
    state.check_sessions()?;

    // concurrent calls on one session behave like some sequential order
    let first = start(&state, &users[3], Mood::Chill, Some(42));
    let responses: Vec<String> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (state, id) = (&state, &first.session_id);
                scope.spawn(move || (0..10).map(|_| state.next(id).unwrap().track.song_id).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    let history = state.summary(&first.session_id).unwrap().history;
    let replay_state = ServiceState::new(v1.clone(), ServiceConfig::default()).unwrap();
    let replay = start(&replay_state, &users[3], Mood::Chill, Some(42));
    for _ in 0..80 {
        replay_state.next(&replay.session_id).unwrap();
    }
    let replay_history = replay_state.summary(&replay.session_id).unwrap().history;
    let distinct: HashSet<&String> = responses.iter().collect();
    let mut sorted_resp = responses.clone();
    sorted_resp.sort();
    let mut sorted_hist = history[1..].to_vec();
    sorted_hist.sort();
    let serialized = distinct.len() == 80 && sorted_resp == sorted_hist && history == replay_history;

    // hot reload under load: every response matches its version's tables
    let swapping = ServiceState::new(v1.clone(), ServiceConfig::default()).unwrap();
    let stop = AtomicBool::new(false);
    let swaps = AtomicUsize::new(0);
    let (reloads, mixed, checked) = std::thread::scope(|scope| {
        let reloader = scope.spawn(|| {
            let mut n = 0usize;
            while !stop.load(Ordering::Relaxed) {
                swapping.reload_artifacts(dirs[(n + 1) % 2]).unwrap();
                n += 1;
                swaps.store(n, Ordering::Relaxed);
            }
            n
        });
        let workers: Vec<_> = (0..16)
            .map(|i| {
                let (swapping, users, swaps) = (&swapping, &users, &swaps);
                scope.spawn(move || {
                    let (mut mixed, mut checked) = (0, 0);
                    // keep sessions coming until several swaps have happened
                    let mut round = 0;
                    while round < 6 || (swaps.load(Ordering::Relaxed) < 6 && round < 2000) {
                        let mood = Mood::ALL[(i + round) % 6];
                        let s = start(swapping, &users[(i * 13 + round) % users.len()], mood, None);
                        let table = if s.model_version == "v1" { &v1.scores } else { &v2.scores };
                        let mut tracks = vec![s.track];
                        for _ in 0..5 {
                            let n = swapping.next(&s.session_id).unwrap();
                            mixed += usize::from(n.model_version != s.model_version);
                            tracks.push(n.track);
                        }
                        for t in tracks {
                            mixed += usize::from(t.mood_score != table.get(&t.song_id, mood));
                            checked += 1;
                        }
                        round += 1;
                    }
                    (mixed, checked)
                })
            })
            .collect();
        let (mixed, checked) = workers
            .into_iter()
            .map(|h| h.join().unwrap())
            .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        stop.store(true, Ordering::Relaxed);
        (reloader.join().unwrap(), mixed, checked)
    });
    swapping.check_sessions()?;
    ensure(
        serialized && reloads >= 6 && mixed == 0,
        format!(
            "100 sessions ran {steps} steps concurrently with 0 violations; 8x10 concurrent calls on one session \
             distinct and equal to a sequential replay: {serialized}; {reloads} reloads during {checked} checked \
             tracks, {mixed} mixed-version responses"
        ),
    )
}

fn main() {
    let mut report = Report { failed: Vec::new() };
    let started = Instant::now();
    let world = generate_world(&SimConfig::default()).expect("default world");
    let world_time = started.elapsed();

    let mut models = None;
    report.check("mood classification", || classification(&world, &mut models));
    report.check("score range and determinism", || match &models {
        Some(m) => score_range(&world, m),
        None => Err("no trained models".into()),
    });
    report.check("ann quality", ann_quality);
    report.check("embedding sanity", embedding_sanity);

    let built = Instant::now();
    let (artifacts, _) = build_artifacts(
        world.catalog.clone(),
        &world.interactions,
        &world.labels,
        &PipelineConfig::default(),
    )
    .expect("default pipeline");
    let setup = world_time + built.elapsed();

    report.check("session invariant fuzz", || session_fuzz(&artifacts));
    report.check("fallback", || fallback(&artifacts));
    report.check("weekly mood distribution", || weekly_distribution(&artifacts, setup));
    report.check("service stress and hot reload", || {
        let v2 = second_version(&artifacts, &world);
        let tmp = tempfile::tempdir().unwrap();
        let (d1, d2) = (tmp.path().join("v1"), tmp.path().join("v2"));
        artifacts.save_dir(&d1).unwrap();
        v2.save_dir(&d2).unwrap();
        service_stress(&artifacts, &v2, [&d1, &d2])
    });

    println!(
        "{} of 8 criteria passed in {:.0}s",
        8 - report.failed.len(),
        started.elapsed().as_secs_f64()
    );
    if !report.failed.is_empty() {
        std::process::exit(1);
    }
}
