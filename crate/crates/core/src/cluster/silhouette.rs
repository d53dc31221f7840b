//! Silhouette score with Euclidean distance.
//!
//! For point `i` in cluster `C`: `a(i)` is the mean distance to the other
//! members of `C`, `b(i)` the smallest mean distance to any other cluster,
//! and `s(i) = (b - a) / max(a, b)`. Points alone in their cluster score 0,
//! as do points with `a = b = 0`.

use rayon::prelude::*;

use super::ClusterError;

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn point_score(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m > 0.0 {
        (b - a) / m
    } else {
        0.0
    }
}

/// Maps arbitrary cluster ids to 0..k in first-appearance order.
fn dense_ids(assignment: &[usize]) -> (Vec<usize>, usize) {
    let mut seen = std::collections::HashMap::new();
    let ids = assignment
        .iter()
        .map(|&c| {
            let next = seen.len();
            *seen.entry(c).or_insert(next)
        })
        .collect();
    (ids, seen.len())
}

/// Mean silhouette over all points. Per-point scores are computed in
/// parallel and summed in index order, so the result is bit-stable.
pub fn silhouette<P: AsRef<[f64]> + Sync>(points: &[P], assignment: &[usize]) -> Result<f64, ClusterError> {
    if points.len() != assignment.len() {
        return Err(ClusterError::AssignmentLength {
            points: points.len(),
            assigned: assignment.len(),
        });
    }
    let (ids, k) = dense_ids(assignment);
    if k < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let mut counts = vec![0usize; k];
    for &c in &ids {
        counts[c] += 1;
    }
    let scores: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let own = ids[i];
            if counts[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0f64; k];
            let pi = points[i].as_ref();
            for (j, pj) in points.iter().enumerate() {
                if j != i {
                    sums[ids[j]] += euclidean(pi, pj.as_ref());
                }
            }
            let a = sums[own] / (counts[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / counts[c] as f64)
                .fold(f64::INFINITY, f64::min);
            point_score(a, b)
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Sample-level silhouette over duplicated points, computed on the distinct
/// points only. Point `u` stands for `weights[u]` coincident samples; the
/// result equals [`silhouette`] on the expanded sample set.
#[derive(Debug, Clone)]
pub struct WeightedSilhouette {
    n: usize,
    distances: Vec<f64>,
    weights: Vec<usize>,
    total: usize,
}

impl WeightedSilhouette {
    pub fn new<P: AsRef<[f64]> + Sync>(points: &[P], weights: &[usize]) -> Result<Self, ClusterError> {
        if points.len() != weights.len() {
            return Err(ClusterError::AssignmentLength {
                points: points.len(),
                assigned: weights.len(),
            });
        }
        if points.is_empty() {
            return Err(ClusterError::NoPoints);
        }
        if weights.contains(&0) {
            return Err(ClusterError::ZeroWeight);
        }
        let n = points.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let pi = points[i].as_ref();
                points.iter().map(|pj| euclidean(pi, pj.as_ref())).collect()
            })
            .collect();
        Ok(Self {
            n,
            distances: rows.concat(),
            weights: weights.to_vec(),
            total: weights.iter().sum(),
        })
    }

    pub fn total_weight(&self) -> usize {
        self.total
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.n + j]
    }

    /// Silhouette for an assignment of the distinct points.
    pub fn score(&self, assignment: &[usize]) -> Result<f64, ClusterError> {
        if assignment.len() != self.n {
            return Err(ClusterError::AssignmentLength {
                points: self.n,
                assigned: assignment.len(),
            });
        }
        let (ids, k) = dense_ids(assignment);
        if k < 2 {
            return Err(ClusterError::SingleCluster);
        }
        let mut cluster_weight = vec![0usize; k];
        for (u, &c) in ids.iter().enumerate() {
            cluster_weight[c] += self.weights[u];
        }
        let per_point: Vec<f64> = (0..self.n)
            .into_par_iter()
            .map(|u| {
                let own = ids[u];
                if cluster_weight[own] == 1 {
                    return 0.0;
                }
                let mut sums = vec![0.0f64; k];
                let row = &self.distances[u * self.n..(u + 1) * self.n];
                for (v, &d) in row.iter().enumerate() {
                    sums[ids[v]] += self.weights[v] as f64 * d;
                }
                let a = sums[own] / (cluster_weight[own] - 1) as f64;
                let b = (0..k)
                    .filter(|&c| c != own)
                    .map(|c| sums[c] / cluster_weight[c] as f64)
                    .fold(f64::INFINITY, f64::min);
                self.weights[u] as f64 * point_score(a, b)
            })
            .collect();
        Ok(per_point.iter().sum::<f64>() / self.total as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincident_pairs_score_one() {
        let pts = [[0.0], [0.0], [1.0], [1.0]];
        assert_eq!(silhouette(&pts, &[0, 0, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn all_singletons_score_zero() {
        let pts = [[0.0], [3.0], [1.0]];
        assert_eq!(silhouette(&pts, &[2, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let pts = [[0.0], [1.0]];
        assert_eq!(silhouette(&pts, &[0, 0]), Err(ClusterError::SingleCluster));
        assert!(matches!(
            silhouette(&pts, &[0]),
            Err(ClusterError::AssignmentLength { .. })
        ));
    }

    #[test]
    fn weighted_matches_expanded() {
        let pts = [[0.0, 0.0], [0.2, 0.1], [3.0, 1.0], [3.1, 1.2], [9.0, 0.0]];
        let w = [3, 1, 2, 1, 1];
        let assignment = [0, 0, 1, 1, 2];
        let ws = WeightedSilhouette::new(&pts, &w).unwrap();
        let mut expanded = Vec::new();
        let mut exp_assign = Vec::new();
        for (u, &m) in w.iter().enumerate() {
            for _ in 0..m {
                expanded.push(pts[u]);
                exp_assign.push(assignment[u]);
            }
        }
        let direct = silhouette(&expanded, &exp_assign).unwrap();
        assert!((ws.score(&assignment).unwrap() - direct).abs() < 1e-12);
    }
}
