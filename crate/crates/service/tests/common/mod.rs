#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use flowmoods::cf_embedding::TrainingConfig;
use flowmoods::mood_classifier::ForestConfig;
use flowmoods::pipeline::{build_artifacts, Artifacts, PipelineConfig};
use flowmoods::simulator::{generate_world, SimConfig};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub struct Fixture {
    pub v1: Artifacts,
    pub v2: Artifacts,
    pub v1_dir: PathBuf,
    pub v2_dir: PathBuf,
    _tmp: tempfile::TempDir,
}

fn build(version: &str, seed: u64) -> Artifacts {
    let world = generate_world(&SimConfig {
        n_users: 120,
        n_songs: 700,
        n_artists: 50,
        positives_per_mood: 100,
        negatives_per_mood: 100,
        streams_per_user: 40,
        ..Default::default()
    })
    .unwrap();
    let cfg = PipelineConfig {
        model_version: version.into(),
        embedding: TrainingConfig {
            dimension: 16,
            epochs: 5,
            ..Default::default()
        },
        forest: ForestConfig {
            n_trees: 20,
            ..Default::default()
        },
        fallback_size: 60,
        seed,
        ..Default::default()
    };
    build_artifacts(world.catalog, &world.interactions, &world.labels, &cfg).unwrap().0
}

/// Two artifact sets over the same world, with different forests and
/// version stamps, saved to their own directories. Both were reloaded from
/// disk so their scores match what the service serves.
pub fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let v1_dir = tmp.path().join("v1");
        let v2_dir = tmp.path().join("v2");
        build("v1", 1).save_dir(&v1_dir).unwrap();
        build("v2", 2).save_dir(&v2_dir).unwrap();
        Fixture {
            v1: Artifacts::load_dir(&v1_dir).unwrap(),
            v2: Artifacts::load_dir(&v2_dir).unwrap(),
            v1_dir,
            v2_dir,
            _tmp: tmp,
        }
    })
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), to.join(entry.file_name())).unwrap();
    }
}

pub fn user(i: usize) -> String {
    fixture().v1.catalog.users()[i].user_id.clone()
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}
