//! Directory-backed, append-only stage store.
//!
//! Layout:
//!
//! ```text
//! <root>/HEAD                 JSON index: stage -> {version, digest}
//! <root>/<stage>/000001.json  immutable stage payloads
//! <root>/cache/...            embedding cache (see `backend::cache`)
//! ```
//!
//! A payload's digest is the SHA-256 of its bytes. Writing a payload that is
//! byte-identical to the current head is a no-op.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const HEAD_FILE: &str = "HEAD";
const STAGE_EXT: &str = "json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("run store I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stage {0:?} has not been written")]
    MissingStage(String),
    #[error("stage {stage:?} version {version} is corrupt: digest {actual} does not match {expected}")]
    Corrupt {
        stage: String,
        version: u64,
        expected: String,
        actual: String,
    },
    #[error("stage {stage:?} version {version} already exists")]
    VersionExists { stage: String, version: u64 },
    #[error("invalid stage name {0:?}")]
    InvalidStageName(String),
    #[error("HEAD index is unreadable: {0}")]
    BadHead(String),
    #[error("stage {stage:?} payload: {message}")]
    Payload { stage: String, message: String },
}

type StoreResult<T> = Result<T, StoreError>;

/// Hex SHA-256 of a byte string.
pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The canonical serialized form of a stage payload.
pub fn encode_payload<T: Serialize>(payload: &T) -> Result<Vec<u8>, serde_json::Error> {
    let mut bytes = serde_json::to_vec_pretty(payload)?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadEntry {
    pub version: u64,
    pub digest: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadIndex {
    pub stages: BTreeMap<String, HeadEntry>,
}

impl HeadIndex {
    pub fn parse(bytes: &[u8]) -> StoreResult<Self> {
        let head: HeadIndex =
            serde_json::from_slice(bytes).map_err(|e| StoreError::BadHead(e.to_string()))?;
        for (name, entry) in &head.stages {
            validate_stage_name(name).map_err(|_| StoreError::BadHead(format!("stage {name:?}")))?;
            if entry.version == 0 || entry.digest.len() != 64 {
                return Err(StoreError::BadHead(format!("entry for {name:?}")));
            }
        }
        Ok(head)
    }
}

fn validate_stage_name(stage: &str) -> StoreResult<()> {
    let ok = !stage.is_empty()
        && stage != "cache"
        && stage
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-');
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidStageName(stage.to_string()))
    }
}

/// Checks stored bytes against the digest recorded in HEAD.
pub fn verify_payload(stage: &str, version: u64, bytes: &[u8], expected: &str) -> StoreResult<()> {
    let actual = digest_bytes(bytes);
    if actual != expected {
        return Err(StoreError::Corrupt {
            stage: stage.to_string(),
            version,
            expected: expected.to_string(),
            actual,
        });
    }
    Ok(())
}

/// Outcome of a stage write.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Persisted {
    pub version: u64,
    pub digest: String,
    /// False when the payload equalled the existing head.
    pub written: bool,
}

#[derive(Debug)]
pub struct RunStore {
    root: PathBuf,
    writer: Mutex<()>,
}

impl RunStore {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> StoreResult<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| StoreError::Io {
            path: root.clone(),
            source,
        })?;
        Ok(Self {
            root,
            writer: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.root.join("cache")
    }

    pub fn stage_path(&self, stage: &str, version: u64) -> PathBuf {
        self.root
            .join(stage)
            .join(format!("{version:06}.{STAGE_EXT}"))
    }

    fn io<T>(path: &Path, r: std::io::Result<T>) -> StoreResult<T> {
        r.map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_head(&self) -> StoreResult<HeadIndex> {
        let path = self.root.join(HEAD_FILE);
        match fs::read(&path) {
            Ok(bytes) => HeadIndex::parse(&bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(HeadIndex::default()),
            Err(source) => Err(StoreError::Io { path, source }),
        }
    }

    fn write_head(&self, head: &HeadIndex) -> StoreResult<()> {
        let path = self.root.join(HEAD_FILE);
        let tmp = self.root.join(format!("{HEAD_FILE}.tmp"));
        let bytes = encode_payload(head).expect("head index serializes");
        Self::io(&tmp, fs::write(&tmp, bytes))?;
        Self::io(&path, fs::rename(&tmp, &path))
    }

    pub fn head(&self, stage: &str) -> StoreResult<Option<HeadEntry>> {
        validate_stage_name(stage)?;
        Ok(self.read_head()?.stages.get(stage).cloned())
    }

    pub fn has_stage(&self, stage: &str) -> StoreResult<bool> {
        Ok(self.head(stage)?.is_some())
    }

    /// Writes raw payload bytes as the next version of `stage`.
    pub fn persist_bytes(&self, stage: &str, bytes: &[u8]) -> StoreResult<Persisted> {
        validate_stage_name(stage)?;
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let mut head = self.read_head()?;
        let digest = digest_bytes(bytes);
        if let Some(entry) = head.stages.get(stage) {
            if entry.digest == digest {
                return Ok(Persisted {
                    version: entry.version,
                    digest,
                    written: false,
                });
            }
        }
        let version = head.stages.get(stage).map_or(1, |e| e.version + 1);
        let dir = self.root.join(stage);
        Self::io(&dir, fs::create_dir_all(&dir))?;
        let path = self.stage_path(stage, version);
        let mut file = match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(StoreError::VersionExists {
                    stage: stage.to_string(),
                    version,
                })
            }
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        Self::io(&path, file.write_all(bytes).and_then(|_| file.sync_all()))?;
        head.stages.insert(
            stage.to_string(),
            HeadEntry {
                version,
                digest: digest.clone(),
            },
        );
        self.write_head(&head)?;
        Ok(Persisted {
            version,
            digest,
            written: true,
        })
    }

    /// Serializes and persists a payload, returning its content digest.
    pub fn persist_stage<T: Serialize>(&self, stage: &str, payload: &T) -> StoreResult<Persisted> {
        let bytes = encode_payload(payload).map_err(|e| StoreError::Payload {
            stage: stage.to_string(),
            message: e.to_string(),
        })?;
        self.persist_bytes(stage, &bytes)
    }

    /// Reads the head version of `stage`, re-verifying its digest.
    pub fn load_bytes(&self, stage: &str) -> StoreResult<(HeadEntry, Vec<u8>)> {
        let entry = self
            .head(stage)?
            .ok_or_else(|| StoreError::MissingStage(stage.to_string()))?;
        let bytes = self.load_version_bytes(stage, &entry)?;
        Ok((entry, bytes))
    }

    fn load_version_bytes(&self, stage: &str, entry: &HeadEntry) -> StoreResult<Vec<u8>> {
        let path = self.stage_path(stage, entry.version);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::MissingStage(stage.to_string()))
            }
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        verify_payload(stage, entry.version, &bytes, &entry.digest)?;
        Ok(bytes)
    }

    pub fn load_stage<T: DeserializeOwned>(&self, stage: &str) -> StoreResult<T> {
        let (_, bytes) = self.load_bytes(stage)?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Payload {
            stage: stage.to_string(),
            message: e.to_string(),
        })
    }

    /// Loads the head payload together with its digest.
    pub fn load_stage_with_digest<T: DeserializeOwned>(
        &self,
        stage: &str,
    ) -> StoreResult<(T, String)> {
        let (entry, bytes) = self.load_bytes(stage)?;
        let value = serde_json::from_slice(&bytes).map_err(|e| StoreError::Payload {
            stage: stage.to_string(),
            message: e.to_string(),
        })?;
        Ok((value, entry.digest))
    }

    /// Loads the first version ever written for `stage`. Its digest is not in
    /// HEAD any more, so only shape is checked.
    pub fn load_first_version<T: DeserializeOwned>(&self, stage: &str) -> StoreResult<T> {
        validate_stage_name(stage)?;
        let path = self.stage_path(stage, 1);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::MissingStage(stage.to_string()))
            }
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Payload {
            stage: stage.to_string(),
            message: e.to_string(),
        })
    }
}
