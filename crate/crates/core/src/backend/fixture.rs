//! File-backed backend for tests and offline runs.
//!
//! ```text
//! <dir>/labels/<sample-key>.txt   labeler response for a clip
//! <dir>/prompts/<sha256>.txt      labeler response for a text-only prompt
//! <dir>/audio/<sample-key>.json   {"dim": n, "values": [...]}
//! <dir>/text/<sha256>.json        {"dim": n, "values": [...]}
//! ```
//!
//! `<sample-key>` is the sample id when it only contains
//! `[A-Za-z0-9._-]` (and does not start with a dot), otherwise
//! `sha256-<hex of the id>`.

use std::fs;
use std::path::{Path, PathBuf};

use super::wire::{self, AudioEmbedRequest, LabelRequest, TextEmbedRequest};
use super::{GatewayError, Transport};
use crate::store::digest_bytes;

pub fn sample_key(sample_id: &str) -> String {
    let safe = !sample_id.is_empty()
        && !sample_id.starts_with('.')
        && sample_id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'));
    if safe {
        sample_id.to_string()
    } else {
        format!("sha256-{}", digest_bytes(sample_id.as_bytes()))
    }
}

pub fn label_path(dir: &Path, sample_id: &str) -> PathBuf {
    dir.join("labels").join(format!("{}.txt", sample_key(sample_id)))
}

pub fn prompt_path(dir: &Path, prompt: &str) -> PathBuf {
    dir.join("prompts")
        .join(format!("{}.txt", digest_bytes(prompt.as_bytes())))
}

pub fn audio_path(dir: &Path, sample_id: &str) -> PathBuf {
    dir.join("audio").join(format!("{}.json", sample_key(sample_id)))
}

pub fn text_path(dir: &Path, text: &str) -> PathBuf {
    dir.join("text")
        .join(format!("{}.json", digest_bytes(text.as_bytes())))
}

/// Serialized form of a fixture embedding file.
pub fn embedding_file(values: &[f64]) -> String {
    let mut s = serde_json::to_string(&wire::EmbeddingResponse {
        dim: values.len(),
        values: values.to_vec(),
    })
    .expect("embedding serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone)]
pub struct FixtureTransport {
    dir: PathBuf,
}

impl FixtureTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn read(path: PathBuf) -> Result<Vec<u8>, GatewayError> {
        match fs::read(&path) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(GatewayError::FixtureMissing { path })
            }
            Err(source) => Err(GatewayError::Io { path, source }),
        }
    }
}

impl Transport for FixtureTransport {
    fn label(&self, req: &LabelRequest) -> Result<String, GatewayError> {
        let path = match &req.sample_id {
            Some(id) => label_path(&self.dir, id),
            None => prompt_path(&self.dir, &req.prompt),
        };
        let bytes = Self::read(path.clone())?;
        String::from_utf8(bytes).map_err(|_| GatewayError::Io {
            path,
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, "not UTF-8"),
        })
    }

    fn embed_audio(&self, req: &AudioEmbedRequest) -> Result<Vec<f64>, GatewayError> {
        let bytes = Self::read(audio_path(&self.dir, &req.sample_id))?;
        Ok(wire::decode_embedding_response(&bytes)?)
    }

    fn embed_text(&self, req: &TextEmbedRequest) -> Result<Vec<f64>, GatewayError> {
        let bytes = Self::read(text_path(&self.dir, &req.text))?;
        Ok(wire::decode_embedding_response(&bytes)?)
    }
}
