//! Domain values shared by every stage.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::text::Rejection;

/// Score recorded for a sample that has no scorable candidate at all.
pub const FLAGGED_SCORE: f64 = -1.0;

/// One audio clip of the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub sample_id: String,
    pub audio_uri: String,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub dataset_id: String,
}

impl SampleRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.sample_id.is_empty() {
            return Err("sample_id must not be empty".into());
        }
        if self.audio_uri.is_empty() {
            return Err("audio_uri must not be empty".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(format!("duration_s must be > 0, got {}", self.duration_s));
        }
        if self.sample_rate_hz == 0 {
            return Err("sample_rate_hz must be > 0".into());
        }
        if self.dataset_id.is_empty() {
            return Err("dataset_id must not be empty".into());
        }
        Ok(())
    }
}

/// The ordered sample list of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    dataset_id: String,
    samples: Vec<SampleRecord>,
    index: HashMap<String, usize>,
}

impl DatasetManifest {
    /// Builds a manifest, rejecting empty input and duplicate ids.
    pub fn new(samples: Vec<SampleRecord>) -> Result<Self, ManifestInvariant> {
        let first = samples.first().ok_or(ManifestInvariant::Empty)?;
        let dataset_id = first.dataset_id.clone();
        let mut index = HashMap::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if s.dataset_id != dataset_id {
                return Err(ManifestInvariant::MixedDataset {
                    expected: dataset_id,
                    found: s.dataset_id.clone(),
                });
            }
            if index.insert(s.sample_id.clone(), i).is_some() {
                return Err(ManifestInvariant::DuplicateId(s.sample_id.clone()));
            }
        }
        Ok(Self {
            dataset_id,
            samples,
            index,
        })
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, sample_id: &str) -> Option<&SampleRecord> {
        self.index.get(sample_id).map(|&i| &self.samples[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SampleRecord> {
        self.samples.iter()
    }
}

impl<'a> IntoIterator for &'a DatasetManifest {
    type Item = &'a SampleRecord;
    type IntoIter = std::slice::Iter<'a, SampleRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManifestInvariant {
    #[error("manifest has no samples")]
    Empty,
    #[error("duplicate sample_id {0:?}")]
    DuplicateId(String),
    #[error("manifest mixes dataset ids {expected:?} and {found:?}")]
    MixedDataset { expected: String, found: String },
}

/// Where a candidate label came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LabelSource {
    Mllm(String),
    Human,
}

impl LabelSource {
    pub fn is_human(&self) -> bool {
        matches!(self, LabelSource::Human)
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelSource::Mllm(id) => write!(f, "mllm:{id}"),
            LabelSource::Human => f.write_str("human"),
        }
    }
}

impl FromStr for LabelSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(LabelSource::Human),
            _ => match s.strip_prefix("mllm:") {
                Some(id) if !id.is_empty() => Ok(LabelSource::Mllm(id.to_string())),
                _ => Err(format!("invalid label source {s:?}")),
            },
        }
    }
}

impl Serialize for LabelSource {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LabelSource {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A single label proposed for a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLabel {
    pub raw_text: String,
    /// `None` when cleanup rejected the label.
    pub cleaned_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection: Option<Rejection>,
    pub source: LabelSource,
    /// `None` until scored.
    pub clap_score: Option<f64>,
}

impl CandidateLabel {
    pub fn from_cleanup(
        raw_text: impl Into<String>,
        cleaned: Result<String, Rejection>,
        source: LabelSource,
    ) -> Self {
        let (cleaned_text, rejection) = match cleaned {
            Ok(text) => (Some(text), None),
            Err(r) => (None, Some(r)),
        };
        Self {
            raw_text: raw_text.into(),
            cleaned_text,
            rejection,
            source,
            clap_score: None,
        }
    }

    pub fn is_rejected(&self) -> bool {
        self.cleaned_text.is_none()
    }

    pub fn text(&self) -> Option<&str> {
        self.cleaned_text.as_deref()
    }

    /// Cleaned and scored.
    pub fn scored(&self) -> Option<(&str, f64)> {
        Some((self.cleaned_text.as_deref()?, self.clap_score?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelEntry {
    pub timestamp_ms: u64,
    pub previous_label: Option<String>,
    pub new_label: String,
}

/// Per-sample labeling state: candidates, the retained one, and its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub sample_id: String,
    pub candidates: Vec<CandidateLabel>,
    /// Index into `candidates`; `None` when nothing was scorable.
    pub retained: Option<usize>,
    pub top_score: f64,
    #[serde(default)]
    pub relabel_history: Vec<RelabelEntry>,
}

impl Annotation {
    pub fn retained_candidate(&self) -> Option<&CandidateLabel> {
        self.retained.and_then(|i| self.candidates.get(i))
    }

    pub fn retained_label(&self) -> Option<&str> {
        self.retained_candidate().and_then(CandidateLabel::text)
    }

    pub fn is_flagged(&self) -> bool {
        self.retained.is_none()
    }

    pub fn is_human_retained(&self) -> bool {
        self.retained_candidate()
            .is_some_and(|c| c.source.is_human())
    }

    /// `top_score` agrees with the retained candidate, and the retained
    /// candidate is either human or the (first) best machine candidate.
    pub fn is_consistent(&self) -> bool {
        match self.retained_candidate() {
            None => self.retained.is_none() && self.top_score == FLAGGED_SCORE,
            Some(c) => {
                let Some((_, score)) = c.scored() else {
                    return false;
                };
                if score != self.top_score {
                    return false;
                }
                c.source.is_human() || select_retained(&self.candidates) == self.retained
            }
        }
    }
}

/// Picks the candidate to retain: the most recent scored human label if one
/// exists, otherwise the highest-scoring candidate with ties going to the
/// earliest.
pub fn select_retained(candidates: &[CandidateLabel]) -> Option<usize> {
    let human = candidates
        .iter()
        .enumerate()
        .rev()
        .find(|(_, c)| c.source.is_human() && c.scored().is_some())
        .map(|(i, _)| i);
    if human.is_some() {
        return human;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        if let Some((_, score)) = c.scored() {
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
    }
    best.map(|(i, _)| i)
}
