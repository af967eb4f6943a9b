//! Content-hash run store for resuming stages.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;

pub const RUN_STORE_FILE: &str = "run_store.json";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Complete,
    CompleteWithWarnings,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub stage: String,
    pub input_hash: String,
    pub config_hash: String,
    /// Output files relative to the run directory, with their content hashes.
    pub outputs: BTreeMap<String, String>,
    pub timestamp: u64,
    pub status: StageStatus,
}

/// Hashes each file's name and bytes in the given order. Missing files hash
/// as absent rather than failing.
pub fn hash_files(paths: &[PathBuf]) -> Result<String, HarnessError> {
    let mut h = Sha256::new();
    for p in paths {
        h.update(p.to_string_lossy().as_bytes());
        h.update([0]);
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| HarnessError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.is_file())
                .collect();
            entries.sort();
            h.update(hash_files(&entries)?.as_bytes());
        } else if p.exists() {
            let bytes = std::fs::read(p).map_err(|e| HarnessError::io(p, e))?;
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        } else {
            h.update(b"<absent>");
        }
    }
    Ok(hex::encode(h.finalize()))
}

pub fn hash_value<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("serializable config");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Run metadata for one output directory, guarded by an advisory file lock
/// held for the store's lifetime.
#[derive(Debug)]
pub struct RunStore {
    dir: PathBuf,
    entries: BTreeMap<String, RunArtifact>,
    _lock: File,
}

impl RunStore {
    pub fn open(dir: &Path) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let lock_path = dir.join(LOCK_FILE);
        let lock = File::create(&lock_path).map_err(|e| HarnessError::io(&lock_path, e))?;
        lock.lock().map_err(|e| HarnessError::io(&lock_path, e))?;
        let path = dir.join(RUN_STORE_FILE);
        let entries = if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
            serde_json::from_str(&text).unwrap_or_else(|e| {
                log::warn!("{}: unreadable run store ({e}); starting fresh", path.display());
                BTreeMap::new()
            })
        } else {
            BTreeMap::new()
        };
        Ok(RunStore {
            dir: dir.to_path_buf(),
            entries,
            _lock: lock,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, stage: &str) -> Option<&RunArtifact> {
        self.entries.get(stage)
    }

    /// True when `stage` last ran on the same inputs and config and its
    /// outputs are unchanged on disk.
    pub fn is_current(&self, stage: &str, input_hash: &str, config_hash: &str) -> bool {
        let Some(a) = self.entries.get(stage) else {
            return false;
        };
        a.input_hash == input_hash
            && a.config_hash == config_hash
            && a.outputs.iter().all(|(rel, hash)| {
                hash_files(&[self.dir.join(rel)]).is_ok_and(|h| &h == hash) && self.dir.join(rel).exists()
            })
    }

    pub fn record(
        &mut self,
        stage: &str,
        input_hash: String,
        config_hash: String,
        outputs: &[&str],
        status: StageStatus,
    ) -> Result<(), HarnessError> {
        let mut hashes = BTreeMap::new();
        for rel in outputs {
            hashes.insert(rel.to_string(), hash_files(&[self.dir.join(rel)])?);
        }
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.entries.insert(
            stage.to_string(),
            RunArtifact {
                stage: stage.to_string(),
                input_hash,
                config_hash,
                outputs: hashes,
                timestamp,
                status,
            },
        );
        let path = self.dir.join(RUN_STORE_FILE);
        crate::jsonl::write_json(&path, &self.entries).map_err(|e| HarnessError::io(&path, e))
    }
}
