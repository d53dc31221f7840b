//! Clients for the three external model roles.
//!
//! A [`Gateway`] wraps one configured backend: it enforces the backend's
//! role, validates returned vectors against the backend's embedding space and
//! caches embeddings. What actually answers the call is a [`Transport`]:
//! either [`http::HttpTransport`] or the file-backed
//! [`fixture::FixtureTransport`].

pub mod cache;
pub mod fixture;
pub mod http;
pub mod prompt;
pub mod wire;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::SampleRecord;
pub use cache::{CacheKey, EmbeddingCache};
pub use prompt::{composite_prompt, initial_prompt};
use wire::{AudioEmbedRequest, AudioPayload, LabelRequest, TextEmbedRequest, WireError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Labeler,
    AlignmentEmbedder,
    SentenceEmbedder,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Labeler => "labeler",
            Role::AlignmentEmbedder => "alignment_embedder",
            Role::SentenceEmbedder => "sentence_embedder",
        })
    }
}

/// `http(s)://host[:port][/prefix]` or `fixture:<directory>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Http(String),
    Fixture(PathBuf),
}

impl Endpoint {
    /// Resolves a relative fixture directory against `base`.
    pub fn resolved(&self, base: &Path) -> Endpoint {
        match self {
            Endpoint::Fixture(dir) if dir.is_relative() => Endpoint::Fixture(base.join(dir)),
            other => other.clone(),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Http(url) => f.write_str(url),
            Endpoint::Fixture(dir) => write!(f, "fixture:{}", dir.display()),
        }
    }
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(dir) = s.strip_prefix("fixture:") {
            if dir.is_empty() {
                return Err("fixture endpoint needs a directory".into());
            }
            return Ok(Endpoint::Fixture(PathBuf::from(dir)));
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            let host = s.split_once("://").map(|(_, h)| h).unwrap_or_default();
            if host.is_empty() || host.starts_with('/') {
                return Err(format!("endpoint {s:?} has no host"));
            }
            return Ok(Endpoint::Http(s.trim_end_matches('/').to_string()));
        }
        Err(format!(
            "endpoint {s:?} must start with http://, https:// or fixture:"
        ))
    }
}

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// How clip audio travels to a remote backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioMode {
    /// Send the URI; the backend fetches the file itself.
    #[default]
    Uri,
    /// Read the file and send it base64-encoded.
    Inline,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendDescriptor {
    pub backend_id: String,
    pub role: Role,
    pub endpoint: Endpoint,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Name of the environment variable holding a bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token_env: Option<String>,
    #[serde(default)]
    pub audio_mode: AudioMode,
    /// Expected embedding dimension; learned from the first response if unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Passed through to the labeler untouched.
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl BackendDescriptor {
    pub fn new(backend_id: impl Into<String>, role: Role, endpoint: Endpoint) -> Self {
        Self {
            backend_id: backend_id.into(),
            role,
            endpoint,
            timeout_s: default_timeout(),
            max_retries: default_retries(),
            auth_token_env: None,
            audio_mode: AudioMode::default(),
            dim: None,
            params: serde_json::Map::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.backend_id.is_empty() {
            return Err("backend_id must not be empty".into());
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(format!("{}: timeout_s must be > 0", self.backend_id));
        }
        if self.dim == Some(0) {
            return Err(format!("{}: dim must be > 0", self.backend_id));
        }
        Ok(())
    }
}

/// A finite real vector tagged with the embedding space it lives in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEmbedding", into = "RawEmbedding")]
pub struct EmbeddingVector {
    space_id: String,
    values: Vec<f64>,
    norm: f64,
}

#[derive(Serialize, Deserialize)]
struct RawEmbedding {
    space_id: String,
    dim: usize,
    values: Vec<f64>,
}

impl TryFrom<RawEmbedding> for EmbeddingVector {
    type Error = WireError;

    fn try_from(raw: RawEmbedding) -> Result<Self, Self::Error> {
        let values = wire::check_embedding(wire::EmbeddingResponse {
            dim: raw.dim,
            values: raw.values,
        })?;
        Ok(Self::from_checked(raw.space_id, values))
    }
}

impl From<EmbeddingVector> for RawEmbedding {
    fn from(v: EmbeddingVector) -> Self {
        RawEmbedding {
            dim: v.values.len(),
            space_id: v.space_id,
            values: v.values,
        }
    }
}

impl EmbeddingVector {
    pub fn new(space_id: impl Into<String>, values: Vec<f64>) -> Result<Self, WireError> {
        let values = wire::check_embedding(wire::EmbeddingResponse {
            dim: values.len(),
            values,
        })?;
        Ok(Self::from_checked(space_id.into(), values))
    }

    fn from_checked(space_id: String, values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self {
            space_id,
            values,
            norm,
        }
    }

    pub fn space_id(&self) -> &str {
        &self.space_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Positive rescaling; errors if `factor` is not a positive finite number.
    pub fn scaled(&self, factor: f64) -> Result<Self, WireError> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(WireError::NonFinite { index: 0 });
        }
        Self::new(
            self.space_id.clone(),
            self.values.iter().map(|v| v * factor).collect(),
        )
    }

    /// Unit-length copy. A zero vector is returned unchanged.
    pub fn normalized(&self) -> Self {
        if self.norm == 0.0 {
            return self.clone();
        }
        Self::from_checked(
            self.space_id.clone(),
            self.values.iter().map(|v| v / self.norm).collect(),
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("backend {backend_id} has role {actual}, expected {expected}")]
    WrongRole {
        backend_id: String,
        expected: String,
        actual: Role,
    },
    #[error("request timed out")]
    Timeout,
    #[error("backend answered HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("giving up after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        last: Box<GatewayError>,
    },
    #[error("audio {uri} is unreadable: {reason}")]
    AudioUnreadable { uri: String, reason: String },
    #[error("fixture file {} is missing", path.display())]
    FixtureMissing { path: PathBuf },
    #[error("backend {backend_id} returned dim {got}, space is registered with dim {expected}")]
    DimensionMismatch {
        backend_id: String,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("text to embed is empty")]
    EmptyText,
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("I/O on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GatewayError {
    /// True for caller-side mistakes rather than backend failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            GatewayError::WrongRole { .. }
                | GatewayError::EmptyText
                | GatewayError::AudioUnreadable { .. }
                | GatewayError::Config(_)
        )
    }
}

/// The thing that answers backend calls.
pub trait Transport: Send + Sync {
    fn label(&self, req: &LabelRequest) -> Result<String, GatewayError>;
    fn embed_audio(&self, req: &AudioEmbedRequest) -> Result<Vec<f64>, GatewayError>;
    fn embed_text(&self, req: &TextEmbedRequest) -> Result<Vec<f64>, GatewayError>;
}

/// Local path for a `file://` or bare-path URI; `None` for remote URLs.
pub fn local_audio_path(uri: &str) -> Option<PathBuf> {
    if let Some(p) = uri.strip_prefix("file://") {
        return Some(PathBuf::from(p));
    }
    if uri.starts_with("http://") || uri.starts_with("https://") {
        return None;
    }
    Some(PathBuf::from(uri))
}

pub struct Gateway {
    descriptor: BackendDescriptor,
    transport: Box<dyn Transport>,
    cache: EmbeddingCache,
    space_dim: OnceLock<usize>,
    calls: AtomicU64,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend_id", &self.descriptor.backend_id)
            .field("role", &self.descriptor.role)
            .field("endpoint", &self.descriptor.endpoint)
            .finish()
    }
}

impl Gateway {
    pub fn new(descriptor: BackendDescriptor, transport: Box<dyn Transport>, cache: EmbeddingCache) -> Self {
        let space_dim = OnceLock::new();
        if let Some(d) = descriptor.dim {
            let _ = space_dim.set(d);
        }
        Self {
            descriptor,
            transport,
            cache,
            space_dim,
            calls: AtomicU64::new(0),
        }
    }

    /// Builds the transport named by the descriptor's endpoint. Relative
    /// fixture directories resolve against `base_dir`; embeddings are cached
    /// on disk under `cache_root/<backend_id>` when a root is given.
    pub fn connect(
        descriptor: BackendDescriptor,
        base_dir: &Path,
        cache_root: Option<&Path>,
    ) -> Result<Self, GatewayError> {
        descriptor.validate().map_err(GatewayError::Config)?;
        let transport: Box<dyn Transport> = match descriptor.endpoint.resolved(base_dir) {
            Endpoint::Fixture(dir) => Box::new(fixture::FixtureTransport::new(dir)),
            Endpoint::Http(url) => Box::new(http::HttpTransport::new(&url, &descriptor)?),
        };
        let cache = match cache_root {
            Some(root) => EmbeddingCache::on_disk(root.join(&descriptor.backend_id)),
            None => EmbeddingCache::in_memory(),
        };
        Ok(Self::new(descriptor, transport, cache))
    }

    pub fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    pub fn backend_id(&self) -> &str {
        &self.descriptor.backend_id
    }

    pub fn role(&self) -> Role {
        self.descriptor.role
    }

    /// Audio and text vectors from the same backend share one space.
    pub fn space_id(&self) -> &str {
        &self.descriptor.backend_id
    }

    /// Number of calls that reached the transport.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn require_role(&self, allowed: &[Role]) -> Result<(), GatewayError> {
        if allowed.contains(&self.descriptor.role) {
            return Ok(());
        }
        Err(GatewayError::WrongRole {
            backend_id: self.descriptor.backend_id.clone(),
            expected: allowed
                .iter()
                .map(Role::to_string)
                .collect::<Vec<_>>()
                .join(" or "),
            actual: self.descriptor.role,
        })
    }

    fn audio_payload(&self, sample: &SampleRecord) -> Result<AudioPayload, GatewayError> {
        let unreadable = |reason: String| GatewayError::AudioUnreadable {
            uri: sample.audio_uri.clone(),
            reason,
        };
        let local = local_audio_path(&sample.audio_uri);
        match (self.descriptor.audio_mode, local) {
            (AudioMode::Uri, None) => Ok(AudioPayload::Uri(sample.audio_uri.clone())),
            (AudioMode::Uri, Some(path)) => {
                if path.is_file() {
                    Ok(AudioPayload::Uri(sample.audio_uri.clone()))
                } else {
                    Err(unreadable("no such file".into()))
                }
            }
            (AudioMode::Inline, None) => Err(unreadable(
                "inline audio mode needs a local file".into(),
            )),
            (AudioMode::Inline, Some(path)) => {
                let bytes = std::fs::read(&path).map_err(|e| unreadable(e.to_string()))?;
                Ok(AudioPayload::B64(
                    base64::engine::general_purpose::STANDARD.encode(bytes),
                ))
            }
        }
    }

    fn count_call(&self) {
        self.calls.fetch_add(1, Ordering::Relaxed);
    }

    /// Asks the labeler to describe a clip. The response is returned verbatim.
    pub fn generate_labels(&self, sample: &SampleRecord, prompt: &str) -> Result<String, GatewayError> {
        self.require_role(&[Role::Labeler])?;
        let audio = self.audio_payload(sample)?;
        self.count_call();
        self.transport.label(&LabelRequest {
            sample_id: Some(sample.sample_id.clone()),
            audio: Some(audio),
            prompt: prompt.to_string(),
            params: self.descriptor.params.clone(),
        })
    }

    /// Text-only labeler call, used for cluster naming.
    pub fn complete(&self, prompt: &str) -> Result<String, GatewayError> {
        self.require_role(&[Role::Labeler])?;
        self.count_call();
        self.transport.label(&LabelRequest {
            sample_id: None,
            audio: None,
            prompt: prompt.to_string(),
            params: self.descriptor.params.clone(),
        })
    }

    fn finish_vector(&self, values: Vec<f64>) -> Result<EmbeddingVector, GatewayError> {
        let got = values.len();
        let expected = *self.space_dim.get_or_init(|| got);
        if expected != got {
            return Err(GatewayError::DimensionMismatch {
                backend_id: self.descriptor.backend_id.clone(),
                expected,
                got,
            });
        }
        Ok(EmbeddingVector::new(self.space_id(), values)?)
    }

    fn cached_or<F>(&self, key: CacheKey, fetch: F) -> Result<EmbeddingVector, GatewayError>
    where
        F: FnOnce() -> Result<Vec<f64>, GatewayError>,
    {
        if let Some(values) = self.cache.get(&key) {
            return self.finish_vector(values);
        }
        self.count_call();
        let values = fetch()?;
        let vector = self.finish_vector(values)?;
        let stored = self.cache.insert(&key, vector.values().to_vec());
        self.finish_vector(stored)
    }

    pub fn embed_audio(&self, sample: &SampleRecord) -> Result<EmbeddingVector, GatewayError> {
        self.require_role(&[Role::AlignmentEmbedder])?;
        let key = CacheKey::Audio(sample.sample_id.clone());
        if let Some(values) = self.cache.get(&key) {
            return self.finish_vector(values);
        }
        let audio = self.audio_payload(sample)?;
        self.cached_or(key, || {
            self.transport.embed_audio(&AudioEmbedRequest {
                sample_id: sample.sample_id.clone(),
                audio,
            })
        })
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        self.require_role(&[Role::AlignmentEmbedder, Role::SentenceEmbedder])?;
        if text.is_empty() {
            return Err(GatewayError::EmptyText);
        }
        self.cached_or(CacheKey::Text(text.to_string()), || {
            self.transport.embed_text(&TextEmbedRequest {
                text: text.to_string(),
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_parsing() {
        assert_eq!(
            "http://localhost:8080/".parse::<Endpoint>().unwrap(),
            Endpoint::Http("http://localhost:8080".into())
        );
        assert_eq!(
            "fixture:fx/labeler".parse::<Endpoint>().unwrap(),
            Endpoint::Fixture("fx/labeler".into())
        );
        assert!("ftp://x".parse::<Endpoint>().is_err());
        assert!("http://".parse::<Endpoint>().is_err());
        assert!("fixture:".parse::<Endpoint>().is_err());
        let e = Endpoint::Fixture("a".into()).resolved(Path::new("/base"));
        assert_eq!(e, Endpoint::Fixture("/base/a".into()));
    }

    #[test]
    fn embedding_vector_invariants() {
        let v = EmbeddingVector::new("s", vec![3.0, 4.0]).unwrap();
        assert_eq!(v.dim(), 2);
        assert_eq!(v.norm(), 5.0);
        assert!(EmbeddingVector::new("s", vec![]).is_err());
        assert!(EmbeddingVector::new("s", vec![f64::NAN]).is_err());
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"space_id":"s","dim":2,"values":[3.0,4.0]}"#);
        let back: EmbeddingVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<EmbeddingVector>(
            r#"{"space_id":"s","dim":3,"values":[3.0,4.0]}"#
        )
        .is_err());
    }

    #[test]
    fn local_paths() {
        assert_eq!(local_audio_path("file:///a/b.wav"), Some(PathBuf::from("/a/b.wav")));
        assert_eq!(local_audio_path("https://x/y.wav"), None);
        assert_eq!(local_audio_path("rel.wav"), Some(PathBuf::from("rel.wav")));
    }
}
