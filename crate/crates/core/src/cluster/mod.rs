//! Clustering of retained labels in sentence-embedding space.
//!
//! Clustering runs on distinct labels, so two samples with the same label
//! always land in the same cluster. Silhouette scores are computed at sample
//! level, weighting each distinct label by how many samples carry it.

pub mod linkage;
pub mod select;
pub mod silhouette;
pub mod universe;

use std::collections::HashMap;

pub use linkage::{agglomerative_cluster, Dendrogram, Linkage, Merge};
pub use select::{
    adjusted_silhouette, lambda_penalty, score_curve, select_k, solve, trivial_solution, ClusterSolution,
    CurvePoint, CurveRow, SelectOptions, SilhouetteCurve,
};
pub use silhouette::{silhouette, WeightedSilhouette};
pub use universe::{build_universe, LabelIndex, LabelUniverse, UniverseError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("no points to cluster")]
    NoPoints,
    #[error("k = {k} is outside [1, {n}]")]
    KOutOfRange { k: usize, n: usize },
    #[error("point {index} has dimension {got}, expected {expected}")]
    DimMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("{points} points but {assigned} assignments")]
    AssignmentLength { points: usize, assigned: usize },
    #[error("silhouette needs at least two clusters")]
    SingleCluster,
    #[error("point weights must be positive")]
    ZeroWeight,
    #[error("only {unique_labels} unique labels; need at least 3 for a k sweep")]
    DegenerateUniverse { unique_labels: usize },
    #[error("invalid silhouette curve: {0}")]
    BadCurve(String),
    #[error("invalid override: {0}")]
    BadOverride(String),
}

/// Number of distinct labels that appear under two or more cluster ids.
pub fn labels_in_multiple_clusters<'a, I>(sample_assignments: I) -> usize
where
    I: IntoIterator<Item = (&'a str, usize)>,
{
    let mut first_cluster: HashMap<&str, (usize, bool)> = HashMap::new();
    for (label, cluster) in sample_assignments {
        first_cluster
            .entry(label)
            .and_modify(|(c, split)| *split |= *c != cluster)
            .or_insert((cluster, false));
    }
    first_cluster.values().filter(|(_, split)| *split).count()
}
