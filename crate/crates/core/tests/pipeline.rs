use std::collections::BTreeMap;

use flowmoods::cf_embedding::TrainingConfig;
use flowmoods::mood_classifier::ForestConfig;
use flowmoods::pipeline::{build_artifacts, evaluate_models, Artifacts, PipelineConfig, PipelineError, INDEX_FILE};
use flowmoods::simulator::{
    anchor_projection, distribution_csv, generate_world, mood_distribution, simulate_days, SimConfig, SimError,
    StreamLog,
};
use flowmoods::{Label, Mood};

fn small_sim() -> SimConfig {
    SimConfig {
        n_users: 150,
        n_songs: 800,
        n_artists: 60,
        n_days: 3,
        positives_per_mood: 100,
        negatives_per_mood: 100,
        streams_per_user: 40,
        ..Default::default()
    }
}

fn small_pipeline() -> PipelineConfig {
    PipelineConfig {
        embedding: TrainingConfig {
            dimension: 16,
            epochs: 6,
            ..Default::default()
        },
        forest: ForestConfig {
            n_trees: 30,
            ..Default::default()
        },
        fallback_size: 60,
        ..Default::default()
    }
}

fn built() -> &'static (flowmoods::simulator::World, Artifacts) {
    static CELL: std::sync::OnceLock<(flowmoods::simulator::World, Artifacts)> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        let world = generate_world(&small_sim()).unwrap();
        let (artifacts, _) =
            build_artifacts(world.catalog.clone(), &world.interactions, &world.labels, &small_pipeline()).unwrap();
        (world, artifacts)
    })
}

#[test]
fn world_is_deterministic_and_labels_follow_anchors() {
    let cfg = small_sim();
    let a = generate_world(&cfg).unwrap();
    let b = generate_world(&cfg).unwrap();
    assert_eq!(a.catalog.songs(), b.catalog.songs());
    assert_eq!(a.interactions, b.interactions);
    assert_eq!(a.labels, b.labels);

    let mut counts: BTreeMap<(Mood, bool), usize> = BTreeMap::new();
    for l in &a.labels {
        *counts.entry((l.mood, l.label.is_positive())).or_default() += 1;
        // oracle: the generator's anchor rule with its margin
        let song = a.catalog.song(&l.song_id).unwrap();
        let p = anchor_projection(song.audio_embedding.as_ref().unwrap(), l.mood, cfg.embeddings.anchor_support);
        let margin = cfg.embeddings.margin;
        match l.label {
            Label::Positive => assert!(p >= margin, "{} positive for {} with projection {p}", l.song_id, l.mood),
            Label::Negative => assert!(p <= -margin, "{} negative for {} with projection {p}", l.song_id, l.mood),
        }
    }
    for m in Mood::ALL {
        assert!(counts[&(m, true)] >= 100 && counts[&(m, false)] >= 100, "{m}: {counts:?}");
    }
}

#[test]
fn oversized_label_request_is_rejected() {
    let cfg = SimConfig {
        n_songs: 10,
        ..Default::default()
    };
    assert!(matches!(generate_world(&cfg), Err(SimError::Config(_))));
}

#[test]
fn forests_separate_holdout_songs() {
    let (world, artifacts) = built();
    let metrics = evaluate_models(&artifacts.models, &artifacts.catalog, &world.labels).unwrap();
    for (mood, m) in metrics.iter() {
        assert!(m.auc >= 0.95, "{mood}: AUC {}", m.auc);
    }
    for (_, _, s) in artifacts.scores.iter() {
        assert!((0.0..=1.0).contains(&s));
    }
    artifacts.check_versions().unwrap();
}

#[test]
fn simulation_is_deterministic_and_shares_sum_to_one() {
    let (_, artifacts) = built();
    let deps = artifacts.deps(Default::default());
    let cfg = small_sim();
    let (log, stats) = simulate_days(&artifacts.catalog, &deps, &cfg).unwrap();
    let (again, _) = simulate_days(&artifacts.catalog, &deps, &cfg).unwrap();
    assert_eq!(log, again);
    assert!(stats.sessions_started > 0);
    assert!(!log.streams.is_empty());
    assert!(log.streams.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    let end = cfg.start_timestamp + cfg.n_days as i64 * 86_400;
    assert!(log.streams.iter().all(|s| (cfg.start_timestamp..end).contains(&s.timestamp)));

    let dist = mood_distribution(&log).unwrap();
    assert_eq!(dist.len(), cfg.n_days);
    for day in &dist {
        let shares = day.shares.as_ref().unwrap();
        let total: f64 = shares.iter().map(|(_, s)| *s).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
    let csv = distribution_csv(&dist);
    assert_eq!(csv.lines().count(), 1 + cfg.n_days * Mood::COUNT);

    // mood-tagged streams obey the session filter
    for s in &log.streams {
        if let Some(m) = s.mood {
            assert!(artifacts.scores.get(&s.song_id, m).unwrap() >= 0.5);
        }
    }
}

#[test]
fn zero_users_give_an_empty_log() {
    let (_, artifacts) = built();
    let empty = flowmoods::Catalog::new(artifacts.catalog.artists().to_vec(), artifacts.catalog.songs().to_vec(), vec![])
        .unwrap();
    let (log, _) = simulate_days(&empty, &artifacts.deps(Default::default()), &small_sim()).unwrap();
    assert!(log.streams.is_empty());
    assert!(matches!(mood_distribution(&StreamLog::default()), Err(SimError::EmptyLog)));
}

#[test]
fn snapshot_dir_round_trip_and_consistency_errors() {
    let (_, artifacts) = built();
    let dir = tempfile::tempdir().unwrap();
    artifacts.save_dir(dir.path()).unwrap();
    let back = Artifacts::load_dir(dir.path()).unwrap();
    assert_eq!(back.space, artifacts.space);
    assert_eq!(back.models, artifacts.models);
    assert_eq!(back.index, artifacts.index);
    assert_eq!(back.fallback, artifacts.fallback);
    assert_eq!(back.scores.len(), artifacts.scores.len());

    // forests stamped with another version
    let mut models = (*artifacts.models).clone();
    models.model_version = "v2".into();
    models.save(&dir.path().join(flowmoods::pipeline::FORESTS_FILE)).unwrap();
    match Artifacts::load_dir(dir.path()) {
        Err(e @ PipelineError::VersionMismatch { .. }) => {
            let msg = e.to_string();
            assert!(msg.contains("v1") && msg.contains("v2"), "{msg}");
        }
        other => panic!("expected a version mismatch, got {other:?}"),
    }

    std::fs::remove_file(dir.path().join(INDEX_FILE)).unwrap();
    assert!(matches!(
        Artifacts::load_dir(dir.path()),
        Err(PipelineError::Incomplete { file: INDEX_FILE, .. })
    ));
}
