//! Embedding cache, in memory and optionally on disk.
//!
//! Inserting a key that is already present keeps the first value; concurrent
//! writers of the same key are expected to produce equal values anyway.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::store::digest_bytes;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CacheKey {
    Audio(String),
    Text(String),
}

impl CacheKey {
    fn kind(&self) -> &'static str {
        match self {
            CacheKey::Audio(_) => "audio",
            CacheKey::Text(_) => "text",
        }
    }

    fn key(&self) -> &str {
        match self {
            CacheKey::Audio(k) | CacheKey::Text(k) => k,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    key: String,
    dim: usize,
    values: Vec<f64>,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Default)]
pub struct EmbeddingCache {
    memory: Mutex<HashMap<CacheKey, Vec<f64>>>,
    dir: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        Self {
            memory: Mutex::default(),
            dir: Some(dir.into()),
        }
    }

    fn path_for(dir: &Path, key: &CacheKey) -> PathBuf {
        dir.join(key.kind())
            .join(format!("{}.json", digest_bytes(key.key().as_bytes())))
    }

    fn read_disk(&self, key: &CacheKey) -> Option<Vec<f64>> {
        let dir = self.dir.as_ref()?;
        let bytes = fs::read(Self::path_for(dir, key)).ok()?;
        let file: CacheFile = serde_json::from_slice(&bytes).ok()?;
        (file.key == key.key() && file.dim == file.values.len()).then_some(file.values)
    }

    fn write_disk(&self, key: &CacheKey, values: &[f64]) {
        let Some(dir) = &self.dir else { return };
        let path = Self::path_for(dir, key);
        let Some(parent) = path.parent() else { return };
        if fs::create_dir_all(parent).is_err() {
            return;
        }
        let body = serde_json::to_vec(&CacheFile {
            key: key.key().to_string(),
            dim: values.len(),
            values: values.to_vec(),
        })
        .expect("cache entry serializes");
        let tmp = parent.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        if fs::write(&tmp, body).is_ok() {
            // hard_link refuses to replace an existing entry
            let _ = fs::hard_link(&tmp, &path);
        }
        let _ = fs::remove_file(&tmp);
    }

    pub fn get(&self, key: &CacheKey) -> Option<Vec<f64>> {
        if let Some(v) = self.lock().get(key) {
            return Some(v.clone());
        }
        let values = self.read_disk(key)?;
        Some(self.lock().entry(key.clone()).or_insert(values).clone())
    }

    /// Stores `values` unless the key is already present; returns whatever
    /// the cache holds afterwards.
    pub fn insert(&self, key: &CacheKey, values: Vec<f64>) -> Vec<f64> {
        if let Some(existing) = self.get(key) {
            return existing;
        }
        self.write_disk(key, &values);
        let on_disk = self.read_disk(key);
        let mut memory = self.lock();
        memory
            .entry(key.clone())
            .or_insert_with(|| on_disk.unwrap_or(values))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<CacheKey, Vec<f64>>> {
        self.memory.lock().unwrap_or_else(|p| p.into_inner())
    }
}
