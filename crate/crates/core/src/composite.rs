//! Cluster naming from label frequency distributions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::backend::prompt::composite_prompt;
use crate::backend::{Gateway, GatewayError};

const TOTAL_PREFIX: &str = "total samples: ";

#[derive(Debug, thiserror::Error)]
pub enum CompositeError {
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
    #[error("invalid distribution text: {0}")]
    Parse(String),
    #[error("backend returned an empty sentence for cluster {0}")]
    EmptyResponse(usize),
    #[error("labeling cluster {cluster_id}: {source}")]
    Backend {
        cluster_id: usize,
        #[source]
        source: GatewayError,
    },
}

/// Label counts of one cluster, ordered by ascending count then label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionVector {
    pub cluster_id: usize,
    pub entries: Vec<(String, usize)>,
    pub total_samples: usize,
}

impl DistributionVector {
    /// Counts the labels of a cluster's samples.
    pub fn from_labels<'a, I>(cluster_id: usize, labels: I) -> Result<Self, CompositeError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for l in labels {
            *counts.entry(l).or_default() += 1;
        }
        Self::from_counts(cluster_id, counts.into_iter().map(|(l, c)| (l.to_string(), c)))
    }

    /// Builds from `(label, count)` pairs; labels must be distinct.
    pub fn from_counts<I>(cluster_id: usize, counts: I) -> Result<Self, CompositeError>
    where
        I: IntoIterator<Item = (String, usize)>,
    {
        let mut entries: Vec<(String, usize)> = counts.into_iter().collect();
        if entries.is_empty() {
            return Err(CompositeError::EmptyCluster(cluster_id));
        }
        if entries.iter().any(|(_, c)| *c == 0) {
            return Err(CompositeError::Parse("counts must be at least 1".into()));
        }
        entries.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CompositeError::Parse("duplicate label".into()));
        }
        let total_samples = entries.iter().map(|e| e.1).sum();
        Ok(Self {
            cluster_id,
            entries,
            total_samples,
        })
    }

    /// `"label, count; label, count; total samples: N"`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (label, count) in &self.entries {
            out.push_str(label);
            out.push_str(", ");
            out.push_str(&count.to_string());
            out.push_str("; ");
        }
        out.push_str(TOTAL_PREFIX);
        out.push_str(&self.total_samples.to_string());
        out
    }

    /// Inverse of [`render`](Self::render). Labels produced by the default
    /// cleanup never contain `,` or `;`, which is what makes this unambiguous.
    pub fn parse(cluster_id: usize, text: &str) -> Result<Self, CompositeError> {
        let bad = |m: &str| CompositeError::Parse(m.to_string());
        let mut parts: Vec<&str> = text.split("; ").collect();
        let total = parts
            .pop()
            .and_then(|t| t.strip_prefix(TOTAL_PREFIX))
            .ok_or_else(|| bad("missing total"))?;
        let total: usize = total
            .parse()
            .map_err(|_| bad("total is not a number"))?;
        let mut entries = Vec::with_capacity(parts.len());
        for part in parts {
            let (label, count) = part.rsplit_once(", ").ok_or_else(|| bad("entry without count"))?;
            if label.is_empty() || label.contains([';', ',']) {
                return Err(bad("invalid label"));
            }
            let count: usize = count.parse().map_err(|_| bad("count is not a number"))?;
            entries.push((label.to_string(), count));
        }
        let v = Self::from_counts(cluster_id, entries)?;
        if v.total_samples != total {
            return Err(bad("total does not match counts"));
        }
        if v.render() != text {
            return Err(bad("not in canonical order"));
        }
        Ok(v)
    }
}

impl fmt::Display for DistributionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeLabel {
    pub cluster_id: usize,
    pub size: usize,
    pub distribution: String,
    pub sentence: String,
    pub backend_id: String,
}

/// Asks the labeler for a one-sentence description of a cluster. The reply
/// is kept verbatim apart from surrounding whitespace.
pub fn compose_cluster_label(
    dist: &DistributionVector,
    labeler: &Gateway,
) -> Result<CompositeLabel, CompositeError> {
    let rendered = dist.render();
    let prompt = composite_prompt(&rendered).map_err(|_| CompositeError::EmptyCluster(dist.cluster_id))?;
    let reply = labeler
        .complete(&prompt)
        .map_err(|source| CompositeError::Backend {
            cluster_id: dist.cluster_id,
            source,
        })?;
    let sentence = reply.trim();
    if sentence.is_empty() {
        return Err(CompositeError::EmptyResponse(dist.cluster_id));
    }
    Ok(CompositeLabel {
        cluster_id: dist.cluster_id,
        size: dist.total_samples,
        distribution: rendered,
        sentence: sentence.to_string(),
        backend_id: labeler.backend_id().to_string(),
    })
}
