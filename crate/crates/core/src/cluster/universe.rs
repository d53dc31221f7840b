use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backend::{EmbeddingVector, Gateway, GatewayError};
use crate::model::Annotation;

#[derive(Debug, thiserror::Error)]
pub enum UniverseError {
    #[error("no annotations to cluster")]
    Empty,
    #[error("sample {0:?} has no retained label")]
    Unlabeled(String),
    #[error("label universe is inconsistent: {0}")]
    Inconsistent(String),
    #[error("embedding label {label:?}: {source}")]
    Backend {
        label: String,
        #[source]
        source: GatewayError,
    },
}

/// Distinct retained labels, their sample counts and sentence embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelUniverse {
    pub labels: Vec<String>,
    pub multiplicity: Vec<usize>,
    pub embeddings: Vec<EmbeddingVector>,
    pub sample_ids: Vec<String>,
    /// For each sample, its index into `labels`.
    pub sample_label: Vec<usize>,
}

/// Labels in first-appearance order plus the sample map, before embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelIndex {
    pub labels: Vec<String>,
    pub multiplicity: Vec<usize>,
    pub sample_ids: Vec<String>,
    pub sample_label: Vec<usize>,
}

impl LabelIndex {
    pub fn from_annotations(annotations: &[Annotation]) -> Result<Self, UniverseError> {
        if annotations.is_empty() {
            return Err(UniverseError::Empty);
        }
        let mut position: HashMap<&str, usize> = HashMap::new();
        let mut labels = Vec::new();
        let mut multiplicity = Vec::new();
        let mut sample_ids = Vec::with_capacity(annotations.len());
        let mut sample_label = Vec::with_capacity(annotations.len());
        for a in annotations {
            let label = a
                .retained_label()
                .ok_or_else(|| UniverseError::Unlabeled(a.sample_id.clone()))?;
            let idx = *position.entry(label).or_insert_with(|| {
                labels.push(label.to_string());
                multiplicity.push(0);
                labels.len() - 1
            });
            multiplicity[idx] += 1;
            sample_ids.push(a.sample_id.clone());
            sample_label.push(idx);
        }
        Ok(Self {
            labels,
            multiplicity,
            sample_ids,
            sample_label,
        })
    }
}

impl LabelUniverse {
    pub fn new(index: LabelIndex, embeddings: Vec<EmbeddingVector>) -> Result<Self, UniverseError> {
        if embeddings.len() != index.labels.len() {
            return Err(UniverseError::Inconsistent(format!(
                "{} labels but {} embeddings",
                index.labels.len(),
                embeddings.len()
            )));
        }
        if let Some(first) = embeddings.first() {
            if let Some(bad) = embeddings
                .iter()
                .position(|e| e.dim() != first.dim() || e.space_id() != first.space_id())
            {
                return Err(UniverseError::Inconsistent(format!(
                    "embedding of {:?} is in a different space",
                    index.labels[bad]
                )));
            }
        }
        if index.multiplicity.iter().sum::<usize>() != index.sample_ids.len() {
            return Err(UniverseError::Inconsistent("multiplicities do not sum to samples".into()));
        }
        Ok(Self {
            labels: index.labels,
            multiplicity: index.multiplicity,
            embeddings,
            sample_ids: index.sample_ids,
            sample_label: index.sample_label,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn points(&self) -> Vec<&[f64]> {
        self.embeddings.iter().map(EmbeddingVector::values).collect()
    }

    /// Propagates a unique-label assignment to samples.
    pub fn sample_assignment(&self, label_assignment: &[usize]) -> Vec<usize> {
        self.sample_label
            .iter()
            .map(|&u| label_assignment[u])
            .collect()
    }
}

/// Deduplicates retained labels and embeds each distinct one once.
pub fn build_universe(
    annotations: &[Annotation],
    sentence_backend: &Gateway,
    normalize: bool,
) -> Result<LabelUniverse, UniverseError> {
    let index = LabelIndex::from_annotations(annotations)?;
    let embeddings = index
        .labels
        .iter()
        .map(|label| {
            sentence_backend
                .embed_text(label)
                .map(|e| if normalize { e.normalized() } else { e })
                .map_err(|source| UniverseError::Backend {
                    label: label.clone(),
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    LabelUniverse::new(index, embeddings)
}
