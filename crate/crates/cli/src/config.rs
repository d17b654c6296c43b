//! Layered configuration: built-in defaults, then the TOML file, then
//! `--set` assignments, then the dedicated flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use flowmoods::pipeline::PipelineConfig;
use flowmoods::simulator::SimConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub sim: SimConfig,
    pub pipeline: PipelineConfig,
    pub serve: ServeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub idle_timeout_secs: u64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            idle_timeout_secs: flowmoods_service::DEFAULT_IDLE_TIMEOUT.as_secs(),
        }
    }
}

/// What the command line changed relative to defaults plus file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub model_version: Option<String>,
    /// `dotted.path=value` with a TOML literal value.
    pub assignments: Vec<String>,
}

impl Overrides {
    /// The overrides as they would be typed, for the manifest.
    pub fn describe(&self) -> Vec<String> {
        let mut out: Vec<String> = self.assignments.clone();
        if let Some(s) = self.seed {
            out.push(format!("seed={s}"));
        }
        if let Some(v) = &self.model_version {
            out.push(format!("model_version={v}"));
        }
        out
    }
}

pub fn load(file: Option<&Path>, overrides: &Overrides) -> Result<Config> {
    let mut value = toml::Value::try_from(Config::default())?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let from_file: toml::Value =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        merge(&mut value, from_file);
    }
    for a in &overrides.assignments {
        assign(&mut value, a)?;
    }
    let mut config: Config = value.try_into().context("invalid configuration")?;
    if let Some(seed) = overrides.seed {
        config.sim.seed = seed;
        config.pipeline.seed = seed;
        config.pipeline.embedding.seed = seed;
        config.pipeline.index.seed = seed;
    }
    if let Some(v) = &overrides.model_version {
        config.pipeline.model_version = v.clone();
    }
    Ok(config)
}

fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn assign(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let Some((path, raw)) = assignment.split_once('=') else {
        bail!("--set expects key=value, got {assignment:?}");
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    // bare words that are not TOML literals are taken as strings
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let toml::Value::Table(table) = node else {
            bail!("--set {path}: {} is not a section", keys[..i].join("."));
        };
        if i + 1 == keys.len() {
            table.insert(key.to_string(), value);
            return Ok(());
        }
        node = table.entry(key.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
    }
    bail!("--set expects a non-empty key")
}

pub fn idle_timeout(config: &Config) -> std::time::Duration {
    std::time::Duration::from_secs(config.serve.idle_timeout_secs)
}
