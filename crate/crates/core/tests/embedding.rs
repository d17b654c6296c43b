mod common;

use common::{event, plain_catalog, sid, uid};
use flowmoods::cf_embedding::{
    objective, objective_gradient, train_embeddings, EmbeddingError, ImplicitMatrix, TrainingConfig,
};
use flowmoods::scalar::cosine;
use flowmoods::snapshot::SnapshotError;
use flowmoods::EmbeddingSpace;
use proptest::prelude::*;

fn small(dimension: usize, epochs: usize) -> TrainingConfig {
    TrainingConfig {
        dimension,
        epochs,
        seed: 11,
        ..Default::default()
    }
}

// Two disjoint groups of 20 users, each streaming only its own 30 songs.
fn two_blocks() -> (flowmoods::Catalog, Vec<flowmoods::InteractionEvent>) {
    let catalog = plain_catalog(40, 60, 6);
    let mut events = Vec::new();
    for u in 0..40 {
        let block = u / 20;
        for k in 0..30 {
            // each user streams a deterministic 2/3 of the block
            if (u * 7 + k) % 3 != 0 {
                events.push(event(u, block * 30 + k, 1.0 + ((u + k) % 4) as f64));
            }
        }
    }
    (catalog, events)
}

#[test]
fn rank_one_data_gives_parallel_song_vectors() {
    let catalog = plain_catalog(8, 10, 2);
    let events: Vec<_> = (0..8).flat_map(|u| (0..10).map(move |s| event(u, s, 1.0))).collect();
    let (space, _) = train_embeddings::<f64>(&events, &catalog, &small(4, 15)).unwrap();
    for i in 0..10 {
        for j in 0..10 {
            let c = cosine(space.song_vector(&sid(i)).unwrap(), space.song_vector(&sid(j)).unwrap());
            assert!(c >= 0.99, "cos(s{i}, s{j}) = {c}");
        }
    }
    for u in 0..8 {
        for s in 0..10 {
            assert!(space.affinity(&uid(u), &sid(s)).unwrap() > 0.0);
        }
    }
}

#[test]
fn block_structure_is_recovered() {
    let (catalog, events) = two_blocks();
    let (space, report) = train_embeddings::<f64>(&events, &catalog, &small(8, 15)).unwrap();

    let block = |s: usize| s / 30;
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0, 0.0, 0);
    for i in 0..60 {
        for j in (i + 1)..60 {
            let c = cosine(space.song_vector(&sid(i)).unwrap(), space.song_vector(&sid(j)).unwrap());
            if block(i) == block(j) {
                intra += c;
                n_intra += 1;
            } else {
                inter += c;
                n_inter += 1;
            }
        }
    }
    assert!(intra / n_intra as f64 > inter / n_inter as f64);

    // exact top-10 by affinity, brute force over every song
    let mut own = 0;
    for u in 0..40 {
        let mut ranked: Vec<(f64, usize)> = (0..60)
            .map(|s| (space.affinity(&uid(u), &sid(s)).unwrap(), s))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
        if ranked[..10].iter().all(|&(_, s)| block(s) == u / 20) {
            own += 1;
        }
    }
    assert!(own as f64 >= 0.8 * 40.0, "{own}/40 users have an in-block top-10");

    for w in report.objective_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "objective rose: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let events = vec![
        event(0, 0, 2.0),
        event(0, 2, 1.0),
        event(1, 1, 3.0),
        event(2, 0, 1.0),
        event(2, 2, 0.5),
    ];
    let matrix = ImplicitMatrix::<f64>::from_events(&events, 40.0);
    let d = 2;
    let lambda = 0.01;
    let users: Vec<f64> = (0..6).map(|i| 0.3 * ((i as f64) * 1.3).sin()).collect();
    let songs: Vec<f64> = (0..6).map(|i| 0.25 * ((i as f64) * 0.7 + 1.0).cos()).collect();
    let (gu, gs) = objective_gradient(&matrix, &users, &songs, d, lambda);

    let h = 1e-6;
    let check = |analytic: &[f64], which: usize| {
        for k in 0..6 {
            let (mut up_u, mut up_s) = (users.clone(), songs.clone());
            let (mut dn_u, mut dn_s) = (users.clone(), songs.clone());
            if which == 0 {
                up_u[k] += h;
                dn_u[k] -= h;
            } else {
                up_s[k] += h;
                dn_s[k] -= h;
            }
            let numeric = (objective(&matrix, &up_u, &up_s, d, lambda)
                - objective(&matrix, &dn_u, &dn_s, d, lambda))
                / (2.0 * h);
            let rel = (numeric - analytic[k]).abs() / numeric.abs().max(analytic[k].abs()).max(1e-8);
            assert!(rel < 1e-4, "component {k}: numeric {numeric}, analytic {}", analytic[k]);
        }
    };
    check(&gu, 0);
    check(&gs, 1);
}

#[test]
fn objective_matches_dense_sum() {
    let events = vec![event(0, 1, 1.0), event(1, 0, 2.0), event(1, 1, 1.0)];
    let matrix = ImplicitMatrix::<f64>::from_events(&events, 40.0);
    let users = [0.1, -0.2, 0.3, 0.05];
    let songs = [0.4, 0.2, -0.1, 0.3];
    let mut dense = 0.0;
    for u in 0..2 {
        for s in 0..2 {
            let w: f64 = events
                .iter()
                .filter(|e| e.user_id == uid(u) && e.song_id == sid(s))
                .map(|e| e.weight)
                .sum();
            let (c, p) = (1.0 + 40.0 * w, if w > 0.0 { 1.0 } else { 0.0 });
            let pred = users[2 * u] * songs[2 * s] + users[2 * u + 1] * songs[2 * s + 1];
            dense += c * (p - pred) * (p - pred);
        }
    }
    let reg: f64 = users.iter().chain(&songs).map(|x| x * x).sum();
    dense += 0.01 * reg;
    assert!((objective(&matrix, &users, &songs, 2, 0.01) - dense).abs() < 1e-12);
}

#[test]
fn training_is_deterministic_and_snapshots_round_trip() {
    let (catalog, events) = two_blocks();
    let (a, _) = train_embeddings::<f64>(&events, &catalog, &small(8, 4)).unwrap();
    let (b, _) = train_embeddings::<f64>(&events, &catalog, &small(8, 4)).unwrap();
    assert_eq!(a, b);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("space.json");
    a.save(&path).unwrap();
    let back = EmbeddingSpace::load(&path).unwrap();
    assert_eq!(a.songs.data(), back.songs.data());
    assert_eq!(a.users.data(), back.users.data());

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    assert!(matches!(
        EmbeddingSpace::load(&path),
        Err(EmbeddingError::Snapshot(SnapshotError::Corrupt { .. }))
    ));

    std::fs::write(&path, text.replacen("\"version\":1", "\"version\":99", 1)).unwrap();
    match EmbeddingSpace::load(&path) {
        Err(EmbeddingError::Snapshot(e @ SnapshotError::Version { .. })) => {
            let msg = e.to_string();
            assert!(msg.contains("99") && msg.contains('1'), "{msg}");
        }
        other => panic!("expected a version error, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn objective_never_increases(
        cells in prop::collection::vec((0usize..6, 0usize..8, 0.1f64..5.0), 1..30),
        seed in 0u64..1000,
        d in 1usize..5,
    ) {
        let catalog = plain_catalog(6, 8, 2);
        let events: Vec<_> = cells.iter().map(|&(u, s, w)| event(u, s, w)).collect();
        let cfg = TrainingConfig { dimension: d, epochs: 6, seed, ..Default::default() };
        let (_, report) = train_embeddings::<f64>(&events, &catalog, &cfg).unwrap();
        prop_assert_eq!(report.objective_history.len(), 7);
        for w in report.objective_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
        }
    }
}
