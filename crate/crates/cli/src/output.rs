//! Output directory bookkeeping: every file a command writes is recorded
//! and listed with its digest in `manifest.toml`.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{Context, Result};
use gcs_core::io::{sha256_hex, write_atomic, RunConfig};
use serde::Serialize;

pub struct OutDir {
    root: PathBuf,
    written: Mutex<Vec<(String, String)>>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config_hash: String,
    files: Vec<ManifestFile>,
}

#[derive(Serialize)]
struct ManifestFile {
    path: String,
    sha256: String,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), written: Mutex::new(Vec::new()) })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Writes `rel` atomically and records it for the manifest.
    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(rel);
        write_atomic(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.written.lock().expect("poisoned").push((rel.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    pub fn finish(self, command: &str, cfg: &RunConfig) -> Result<()> {
        let mut files: Vec<ManifestFile> = self
            .written
            .into_inner()
            .expect("poisoned")
            .into_iter()
            .map(|(path, sha256)| ManifestFile { path, sha256 })
            .collect();
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let m = Manifest { command, seed: cfg.seed, config_hash: cfg.hash(), files };
        let text = toml::to_string(&m)?;
        let path = self.root.join("manifest.toml");
        write_atomic(&path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
