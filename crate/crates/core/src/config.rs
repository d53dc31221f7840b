//! Run configuration, read from TOML with `key=value` overrides.
//!
//! ```toml
//! manifest = "manifest.jsonl"
//! store = "run"
//!
//! [cleanup]
//! mode = "default"
//!
//! [triage]
//! x = 1.0
//!
//! [cluster]
//! linkage = "ward"
//!
//! [backends.labeler]
//! backend_id = "qwen"
//! endpoint = "http://localhost:9000"
//!
//! [backends.alignment_embedder]
//! backend_id = "clap"
//! endpoint = "fixture:fixtures/clap"
//!
//! [backends.sentence_embedder]
//! backend_id = "minilm"
//! endpoint = "fixture:fixtures/minilm"
//! ```
//!
//! Relative paths, including fixture endpoints, resolve against the
//! directory holding the config file. The role of each backend is implied
//! by its table name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{BackendDescriptor, Role};
use crate::cluster::{Linkage, SelectOptions};
use crate::text::{CleanupMode, CleanupPolicy};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("override {0:?} is not of the form key=value")]
    BadOverride(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleanupConfig {
    #[serde(default)]
    pub mode: CleanupMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncate_words: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reject_non_english: Option<bool>,
}

impl CleanupConfig {
    pub fn policy(&self) -> CleanupPolicy {
        let mut p = CleanupPolicy::for_mode(self.mode);
        if let Some(n) = self.truncate_words {
            p.truncate_words = n;
        }
        if let Some(r) = self.reject_non_english {
            p.reject_non_english = r;
        }
        p
    }
}

fn default_x() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_bind() -> String {
    "127.0.0.1:8650".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriageConfig {
    /// Percent of samples, by lowest score, offered for review.
    #[serde(default = "default_x")]
    pub x: f64,
    /// Stop `run` after scoring until review is done.
    #[serde(default = "default_true")]
    pub pause: bool,
    /// Hide machine labels from the reviewer until they submit.
    #[serde(default)]
    pub blind: bool,
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_dir: Option<PathBuf>,
    /// Environment variable holding the shared API token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_env: Option<String>,
}

impl Default for TriageConfig {
    fn default() -> Self {
        Self {
            x: default_x(),
            pause: true,
            blind: false,
            bind: default_bind(),
            static_dir: None,
            token_env: None,
        }
    }
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    #[serde(default)]
    pub linkage: Linkage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Unit-normalize sentence embeddings before clustering.
    #[serde(default)]
    pub normalize: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            linkage: Linkage::Ward,
            lambda: None,
            k: None,
            stride: 1,
            normalize: false,
        }
    }
}

impl ClusterConfig {
    pub fn select_options(&self) -> SelectOptions {
        SelectOptions {
            linkage: self.linkage,
            lambda_override: self.lambda,
            k_override: self.k,
            stride: self.stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backends {
    pub labeler: BackendDescriptor,
    pub alignment_embedder: BackendDescriptor,
    pub sentence_embedder: BackendDescriptor,
}

fn default_store() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    #[serde(default = "default_store")]
    pub store: PathBuf,
    /// Only used by synthetic data generation.
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 means one per core.
    #[serde(default)]
    pub parallelism: usize,
    #[serde(default)]
    pub cleanup: CleanupConfig,
    #[serde(default)]
    pub triage: TriageConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
    pub backends: Backends,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `a.b.c=value`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(assignment.to_string()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(assignment.to_string()));
    }
    let (last, parents) = path.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::BadOverride(format!("{key}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), parse_value(value.trim()));
    Ok(())
}

const ROLE_TABLES: [(&str, Role); 3] = [
    ("labeler", Role::Labeler),
    ("alignment_embedder", Role::AlignmentEmbedder),
    ("sentence_embedder", Role::SentenceEmbedder),
];

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        if let Some(backends) = table.get_mut("backends").and_then(toml::Value::as_table_mut) {
            for (name, role) in ROLE_TABLES {
                if let Some(b) = backends.get_mut(name).and_then(toml::Value::as_table_mut) {
                    b.entry("role")
                        .or_insert_with(|| toml::Value::String(role.to_string()));
                }
            }
        }
        let mut config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, overrides)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !(self.triage.x.is_finite() && self.triage.x > 0.0 && self.triage.x <= 100.0) {
            return invalid(format!("triage.x must be in (0, 100], got {}", self.triage.x));
        }
        self.cleanup.policy().validate().map_err(ConfigError::Invalid)?;
        if let Some(l) = self.cluster.lambda {
            if !l.is_finite() {
                return invalid("cluster.lambda must be finite".into());
            }
        }
        if self.cluster.k.is_some_and(|k| k < 2) {
            return invalid("cluster.k must be >= 2".into());
        }
        if self.cluster.stride == 0 {
            return invalid("cluster.stride must be >= 1".into());
        }
        for (name, role) in ROLE_TABLES {
            let d = self.backend(role);
            if d.role != role {
                return invalid(format!("backends.{name} has role {}", d.role));
            }
            d.validate().map_err(ConfigError::Invalid)?;
        }
        Ok(())
    }

    pub fn backend(&self, role: Role) -> &BackendDescriptor {
        match role {
            Role::Labeler => &self.backends.labeler,
            Role::AlignmentEmbedder => &self.backends.alignment_embedder,
            Role::SentenceEmbedder => &self.backends.sentence_embedder,
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.resolve(&self.manifest)
    }

    pub fn store_path(&self) -> PathBuf {
        self.resolve(&self.store)
    }

    pub fn static_dir(&self) -> Option<PathBuf> {
        self.triage.static_dir.as_deref().map(|p| self.resolve(p))
    }
}
