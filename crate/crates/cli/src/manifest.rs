//! `manifest.json`: what each stage produced, from what, under which
//! model version.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the work directory.
    pub path: PathBuf,
    pub produced_by: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_version: Option<String>,
    pub sha256: String,
    /// Files read to produce this one; external inputs keep their given path.
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    /// Stamp of the most recently trained model.
    pub model_version: Option<String>,
    /// Command line overrides per subcommand, as last invoked.
    pub overrides: BTreeMap<String, Vec<String>>,
    /// Keyed by output file name.
    pub artifacts: BTreeMap<String, ArtifactRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl PipelineManifest {
    pub fn load_or_default(workdir: &Path) -> Result<Self> {
        let path = workdir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, workdir: &Path) -> Result<()> {
        let path = workdir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }

    /// Hashes `file` in `workdir` and records it. A file may only ever be
    /// produced by one subcommand.
    pub fn record(
        &mut self,
        workdir: &Path,
        file: &str,
        produced_by: &str,
        model_version: Option<&str>,
        inputs: Vec<PathBuf>,
    ) -> Result<()> {
        if let Some(prev) = self.artifacts.get(file) {
            if prev.produced_by != produced_by {
                bail!("{file} is already produced by `{}`", prev.produced_by);
            }
        }
        let sha256 = sha256_file(&workdir.join(file))?;
        self.artifacts.insert(
            file.to_string(),
            ArtifactRecord {
                path: PathBuf::from(file),
                produced_by: produced_by.to_string(),
                model_version: model_version.map(str::to_string),
                sha256,
                inputs,
            },
        );
        Ok(())
    }
}
