//! Versioned JSON snapshot container.
//!
//! Every artifact file is a single JSON object
//! `{"kind": "...", "version": N, "payload": {...}}`. Floats are written in
//! shortest round-trip form and parsed exactly, so a load of a saved
//! snapshot reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt snapshot {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("snapshot {path} has version {found}, this build supports version {supported}")]
    Version {
        path: PathBuf,
        found: u32,
        supported: u32,
    },
    #[error("snapshot {path} holds a {found:?}, expected a {expected:?}")]
    Kind {
        path: PathBuf,
        expected: String,
        found: String,
    },
}

#[derive(Serialize)]
struct EnvelopeOut<'a, P> {
    kind: &'a str,
    version: u32,
    payload: &'a P,
}

#[derive(Deserialize)]
struct Header {
    kind: String,
    version: u32,
}

#[derive(Deserialize)]
struct EnvelopeIn<P> {
    payload: P,
}

pub fn save<P: Serialize>(path: &Path, kind: &str, payload: &P) -> Result<(), SnapshotError> {
    let io = |source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    serde_json::to_writer(
        &mut w,
        &EnvelopeOut {
            kind,
            version: SNAPSHOT_VERSION,
            payload,
        },
    )
    .map_err(|e| SnapshotError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n").map_err(io)?;
    w.flush().map_err(io)
}

pub fn load<P: DeserializeOwned>(path: &Path, kind: &str) -> Result<P, SnapshotError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_string(&mut text))
        .map_err(|source| SnapshotError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let corrupt = |e: serde_json::Error| SnapshotError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let header: Header = serde_json::from_str(&text).map_err(corrupt)?;
    if header.version != SNAPSHOT_VERSION {
        return Err(SnapshotError::Version {
            path: path.to_path_buf(),
            found: header.version,
            supported: SNAPSHOT_VERSION,
        });
    }
    if header.kind != kind {
        return Err(SnapshotError::Kind {
            path: path.to_path_buf(),
            expected: kind.to_string(),
            found: header.kind,
        });
    }
    let env: EnvelopeIn<P> = serde_json::from_str(&text).map_err(corrupt)?;
    Ok(env.payload)
}
