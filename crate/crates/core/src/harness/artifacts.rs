use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Hash and size of one written file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sha256: String,
    pub bytes: u64,
}

/// Index of every artifact of a run, keyed by path relative to the output
/// directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub files: BTreeMap<String, ManifestEntry>,
    /// Name of the stage that aborted the run, if any.
    pub failed_stage: Option<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Single writer for all files of a run.
///
/// Every file is rendered in memory first, written in one call and hashed,
/// so the manifest always matches what is on disk.
pub struct Artifacts {
    root: PathBuf,
    manifest: Manifest,
}

impl Artifacts {
    pub fn new(root: &Path, config_hash: String) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: Manifest {
                config_hash,
                ..Manifest::default()
            },
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Writes `bytes` to `rel` and records it in the manifest.
    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<String> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, bytes)?;
        self.manifest.files.insert(
            rel.to_string(),
            ManifestEntry {
                sha256: hex::encode(Sha256::digest(bytes)),
                bytes: bytes.len() as u64,
            },
        );
        Ok(rel.to_string())
    }

    /// Renders with `f` into a buffer, then writes it.
    pub fn write_with<F>(&mut self, rel: &str, f: F) -> Result<String>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write_bytes(rel, &buf)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<String> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())
    }

    /// Writes a file that is deliberately left out of the manifest, such as
    /// a report carrying wall-clock times.
    pub fn write_unlisted(&self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        std::fs::write(&path, bytes)?;
        Ok(path)
    }

    pub fn finish(&mut self, failed_stage: Option<&str>) -> Result<PathBuf> {
        self.manifest.failed_stage = failed_stage.map(str::to_string);
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        self.write_unlisted(MANIFEST_FILE, text.as_bytes())
    }
}

/// Serializes rows into CSV with a header.
pub fn csv_bytes<T: Serialize>(rows: &[T], out: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
