//! Content-addressed response cache.
//!
//! Keys are `sha256(backend_id + canonical request JSON)`. With a directory
//! configured, each entry is persisted as `<hex key>.json` and survives process
//! restarts; the in-memory map is always consulted first.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Compact JSON with object keys sorted at every level.
pub fn canonical_json(value: &Value) -> String {
    // serde_json's Map is a BTreeMap without `preserve_order`, so a round
    // trip through Value sorts keys; compact output normalizes whitespace.
    let sorted: Value = serde_json::from_str(&value.to_string()).expect("valid JSON");
    serde_json::to_string(&sorted).expect("Value always serializes")
}

pub fn cache_key(backend_id: &str, request: &Value) -> String {
    let mut h = Sha256::new();
    h.update(backend_id.as_bytes());
    h.update(canonical_json(request).as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub backend_id: String,
    pub request: Value,
    pub response: Value,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Default)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    // key -> canonical response JSON
    memory: RwLock<HashMap<String, String>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache {
            dir: Some(dir),
            memory: RwLock::default(),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Canonical response JSON stored under `key`, if any.
    pub fn get(&self, key: &str) -> Option<String> {
        if let Some(hit) = self.memory.read().expect("cache lock").get(key) {
            return Some(hit.clone());
        }
        let path = self.path_for(key)?;
        let entry: CacheEntry = serde_json::from_slice(&fs::read(path).ok()?).ok()?;
        if entry.key != key {
            log::warn!("cache entry {key} carries mismatched key {}", entry.key);
            return None;
        }
        let response = canonical_json(&entry.response);
        self.memory
            .write()
            .expect("cache lock")
            .insert(key.to_string(), response.clone());
        Some(response)
    }

    pub fn put(
        &self,
        key: &str,
        backend_id: &str,
        request: &Value,
        response: &Value,
    ) -> std::io::Result<()> {
        let canonical = canonical_json(response);
        if let Some(path) = self.path_for(key) {
            let entry = CacheEntry {
                key: key.to_string(),
                backend_id: backend_id.to_string(),
                request: request.clone(),
                response: response.clone(),
                created_at: Utc::now(),
            };
            let dir = path.parent().expect("cache files live in the cache dir");
            let mut tmp = tempfile_in(dir, key)?;
            tmp.1.write_all(&serde_json::to_vec_pretty(&entry)?)?;
            tmp.1.sync_all()?;
            fs::rename(&tmp.0, &path)?;
        }
        self.memory
            .write()
            .expect("cache lock")
            .insert(key.to_string(), canonical);
        Ok(())
    }

    pub fn len(&self) -> usize {
        match &self.dir {
            Some(dir) => fs::read_dir(dir)
                .map(|rd| {
                    rd.filter_map(Result::ok)
                        .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                        .count()
                })
                .unwrap_or(0),
            None => self.memory.read().expect("cache lock").len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }
}

fn tempfile_in(dir: &Path, key: &str) -> std::io::Result<(PathBuf, fs::File)> {
    let path = dir.join(format!(
        ".{key}.{}.{:?}.tmp",
        std::process::id(),
        std::thread::current().id()
    ));
    let file = fs::File::create(&path)?;
    Ok((path, file))
}
