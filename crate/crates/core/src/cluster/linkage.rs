//! Agglomerative clustering with Lance–Williams updates.
//!
//! Clusters live in "slots": slot `i` starts as point `i`, and merging slots
//! `i < j` stores the union in `i` and retires `j`. A slot index is therefore
//! always the smallest point index of its cluster, which gives cuts a
//! canonical cluster numbering.
//!
//! Ward works on squared Euclidean dissimilarities (a merge costs twice the
//! increase in within-cluster sum of squares); average and complete work on
//! Euclidean distances.

use serde::{Deserialize, Serialize};

use super::ClusterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    #[default]
    Ward,
    Average,
    Complete,
}

impl std::str::FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ward" => Ok(Linkage::Ward),
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            _ => Err(format!("unknown linkage {s:?} (ward | average | complete)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Surviving slot (smaller index).
    pub left: usize,
    /// Retired slot.
    pub right: usize,
    /// Linkage dissimilarity at which the merge happened.
    pub dissimilarity: f64,
    /// Size of the merged cluster.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    n_points: usize,
    linkage: Linkage,
    merges: Vec<Merge>,
}

fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn validate_points<P: AsRef<[f64]>>(points: &[P]) -> Result<usize, ClusterError> {
    let first = points.first().ok_or(ClusterError::NoPoints)?;
    let dim = first.as_ref().len();
    for (i, p) in points.iter().enumerate() {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(ClusterError::DimMismatch {
                index: i,
                expected: dim,
                got: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(ClusterError::NonFinite { index: i });
        }
    }
    Ok(dim)
}

impl Dendrogram {
    /// Builds the full merge hierarchy. Ties between equal dissimilarities go
    /// to the lexicographically smallest slot pair.
    pub fn build<P: AsRef<[f64]>>(points: &[P], linkage: Linkage) -> Result<Self, ClusterError> {
        validate_points(points)?;
        let n = points.len();
        let mut d = vec![0.0f64; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let sq = squared_euclidean(points[i].as_ref(), points[j].as_ref());
                let v = match linkage {
                    Linkage::Ward => sq,
                    Linkage::Average | Linkage::Complete => sq.sqrt(),
                };
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        let mut size = vec![1usize; n];
        let mut active = vec![true; n];
        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        for _ in 1..n {
            let mut best: Option<(usize, usize, f64)> = None;
            for i in (0..n).filter(|&i| active[i]) {
                for j in ((i + 1)..n).filter(|&j| active[j]) {
                    let v = d[i * n + j];
                    if best.is_none_or(|(_, _, b)| v < b) {
                        best = Some((i, j, v));
                    }
                }
            }
            let (i, j, dij) = best.expect("at least two active slots");
            let (ni, nj) = (size[i] as f64, size[j] as f64);
            for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
                let dik = d[i * n + k];
                let djk = d[j * n + k];
                let nk = size[k] as f64;
                let updated = match linkage {
                    Linkage::Ward => ((ni + nk) * dik + (nj + nk) * djk - nk * dij) / (ni + nj + nk),
                    Linkage::Average => (ni * dik + nj * djk) / (ni + nj),
                    Linkage::Complete => dik.max(djk),
                };
                d[i * n + k] = updated;
                d[k * n + i] = updated;
            }
            active[j] = false;
            size[i] += size[j];
            merges.push(Merge {
                left: i,
                right: j,
                dissimilarity: dij,
                size: size[i],
            });
        }
        Ok(Self {
            n_points: n,
            linkage,
            merges,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn linkage(&self) -> Linkage {
        self.linkage
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Flat assignment with `k` clusters: the state after the first `n - k`
    /// merges. Cluster ids are ordered by each cluster's smallest point.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>, ClusterError> {
        let n = self.n_points;
        if k == 0 || k > n {
            return Err(ClusterError::KOutOfRange { k, n });
        }
        let mut slot_of: Vec<usize> = (0..n).collect();
        for m in &self.merges[..n - k] {
            for s in slot_of.iter_mut() {
                if *s == m.right {
                    *s = m.left;
                }
            }
        }
        Ok(canonical_ids(&slot_of))
    }

    /// Every cut from `n` clusters down to 1, yielded as `(k, assignment)`.
    pub fn cuts(&self) -> impl Iterator<Item = (usize, Vec<usize>)> + '_ {
        let n = self.n_points;
        let mut slot_of: Vec<usize> = (0..n).collect();
        let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut step = 0usize;
        std::iter::from_fn(move || {
            if step > self.merges.len() {
                return None;
            }
            if step > 0 {
                let m = self.merges[step - 1];
                let moved = std::mem::take(&mut members[m.right]);
                for &p in &moved {
                    slot_of[p] = m.left;
                }
                members[m.left].extend(moved);
            }
            let k = n - step;
            step += 1;
            Some((k, canonical_ids(&slot_of)))
        })
    }
}

/// Relabels slot ids to 0..k in order of first appearance.
fn canonical_ids(slot_of: &[usize]) -> Vec<usize> {
    let mut map = vec![usize::MAX; slot_of.len()];
    let mut next = 0;
    slot_of
        .iter()
        .map(|&s| {
            if map[s] == usize::MAX {
                map[s] = next;
                next += 1;
            }
            map[s]
        })
        .collect()
}

/// Clusters `points` into `k` groups.
pub fn agglomerative_cluster<P: AsRef<[f64]>>(
    points: &[P],
    k: usize,
    linkage: Linkage,
) -> Result<Vec<usize>, ClusterError> {
    if points.is_empty() {
        return Err(ClusterError::NoPoints);
    }
    if k == 0 || k > points.len() {
        return Err(ClusterError::KOutOfRange { k, n: points.len() });
    }
    Dendrogram::build(points, linkage)?.cut(k)
}
