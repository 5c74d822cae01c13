//! On-disk cache of raw generations, one JSON object per line.
//!
//! Entries are keyed by model, template id and note hash, so a cached
//! generation is reused only for the exact same request.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::QueryGenError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedGeneration {
    pub key: String,
    pub model_name: String,
    pub template_id: String,
    pub note_hash: String,
    pub raw_generation: String,
    pub latency_s: f64,
}

pub fn note_hash(note: &str) -> String {
    hex::encode(Sha256::digest(note.as_bytes()))
}

pub fn cache_key(model_name: &str, template_id: &str, note_hash: &str) -> String {
    let mut h = Sha256::new();
    for part in [model_name, template_id, note_hash] {
        h.update(part.as_bytes());
        h.update(b"\0");
    }
    hex::encode(h.finalize())
}

#[derive(Debug)]
pub struct GenerationCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, CachedGeneration>>,
}

impl GenerationCache {
    pub fn in_memory() -> Self {
        GenerationCache {
            path: None,
            entries: Mutex::new(HashMap::new()),
        }
    }

    /// Open (or start) a cache file. Later lines win over earlier ones.
    pub fn open(path: &Path) -> Result<Self, QueryGenError> {
        let mut entries = HashMap::new();
        match File::open(path) {
            Ok(f) => {
                for (i, line) in BufReader::new(f).lines().enumerate() {
                    let line = line.map_err(|e| QueryGenError::Io(format!("{}: {e}", path.display())))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let entry: CachedGeneration = serde_json::from_str(&line).map_err(|e| {
                        QueryGenError::Io(format!("{}: line {}: {e}", path.display(), i + 1))
                    })?;
                    entries.insert(entry.key.clone(), entry);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(QueryGenError::Io(format!("{}: {e}", path.display()))),
        }
        Ok(GenerationCache {
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
        })
    }

    pub fn get(&self, key: &str) -> Option<CachedGeneration> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Insert and append to the file. The lock is held across the write so
    /// lines never interleave.
    pub fn put(&self, entry: CachedGeneration) -> Result<(), QueryGenError> {
        let mut entries = self.entries.lock().unwrap();
        if let Some(path) = &self.path {
            let io = |e: std::io::Error| QueryGenError::Io(format!("{}: {e}", path.display()));
            let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
            let mut line = serde_json::to_string(&entry).expect("cache entry serializes");
            line.push('\n');
            f.write_all(line.as_bytes()).map_err(io)?;
        }
        entries.insert(entry.key.clone(), entry);
        Ok(())
    }
}
