//! Choosing the number of clusters with a linearly penalized silhouette.
//!
//! The penalty rate is the average silhouette gain per extra cluster over the
//! whole sweep, `(s(k_max) - s(2)) / (k_max - 2)`; the chosen `k` maximizes
//! `s(k) - penalty * k`.

use serde::{Deserialize, Serialize};

use super::linkage::{Dendrogram, Linkage};
use super::silhouette::WeightedSilhouette;
use super::universe::LabelUniverse;
use super::ClusterError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub s: f64,
}

/// Silhouette per cluster count, strictly increasing in `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CurvePoint>", into = "Vec<CurvePoint>")]
pub struct SilhouetteCurve(Vec<CurvePoint>);

impl TryFrom<Vec<CurvePoint>> for SilhouetteCurve {
    type Error = ClusterError;

    fn try_from(points: Vec<CurvePoint>) -> Result<Self, Self::Error> {
        Self::new(points)
    }
}

impl From<SilhouetteCurve> for Vec<CurvePoint> {
    fn from(c: SilhouetteCurve) -> Self {
        c.0
    }
}

impl SilhouetteCurve {
    pub fn new(points: Vec<CurvePoint>) -> Result<Self, ClusterError> {
        if points.is_empty() {
            return Err(ClusterError::BadCurve("empty curve".into()));
        }
        if points.windows(2).any(|w| w[1].k <= w[0].k) {
            return Err(ClusterError::BadCurve("k must be strictly increasing".into()));
        }
        if points.iter().any(|p| !p.s.is_finite()) {
            return Err(ClusterError::BadCurve("non-finite silhouette".into()));
        }
        Ok(Self(points))
    }

    /// Builds a curve for `k = 2, 3, ...` from consecutive scores.
    pub fn from_scores(scores: &[f64]) -> Result<Self, ClusterError> {
        Self::new(
            scores
                .iter()
                .enumerate()
                .map(|(i, &s)| CurvePoint { k: i + 2, s })
                .collect(),
        )
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.0
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        self.0
            .binary_search_by_key(&k, |p| p.k)
            .ok()
            .map(|i| self.0[i].s)
    }

    pub fn k_max(&self) -> usize {
        self.0.last().map_or(0, |p| p.k)
    }
}

pub fn lambda_penalty(curve: &SilhouetteCurve) -> Result<f64, ClusterError> {
    let first = curve.points()[0];
    let last = *curve.points().last().expect("curve is non-empty");
    if first.k != 2 {
        return Err(ClusterError::BadCurve("curve must start at k = 2".into()));
    }
    if last.k <= 2 {
        return Err(ClusterError::DegenerateUniverse { unique_labels: last.k });
    }
    Ok((last.s - first.s) / (last.k - 2) as f64)
}

pub fn adjusted_silhouette(s: f64, k: usize, lambda: f64) -> f64 {
    s - lambda * k as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub k: usize,
    pub s: f64,
    pub s_adj: f64,
}

/// Scores every curve point and returns rows plus the index of the first
/// maximum of `s_adj` (ties go to the smaller k).
pub fn score_curve(curve: &SilhouetteCurve, lambda: f64) -> (Vec<CurveRow>, usize) {
    let rows: Vec<CurveRow> = curve
        .points()
        .iter()
        .map(|p| CurveRow {
            k: p.k,
            s: p.s,
            s_adj: adjusted_silhouette(p.s, p.k, lambda),
        })
        .collect();
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.s_adj > rows[best].s_adj {
            best = i;
        }
    }
    (rows, best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    pub linkage: Linkage,
    pub lambda_override: Option<f64>,
    pub k_override: Option<usize>,
    /// Evaluate every `stride`-th k (k_max is always included).
    pub stride: usize,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            linkage: Linkage::Ward,
            lambda_override: None,
            k_override: None,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSolution {
    pub k: usize,
    pub k_max: usize,
    /// Unique-label index -> cluster id in `0..k`.
    pub assignment: Vec<usize>,
    pub s: f64,
    pub lambda: f64,
    pub s_adj: f64,
    /// Unique-label indices per cluster.
    pub members: Vec<Vec<usize>>,
    pub curve: Vec<CurveRow>,
    /// Set when the universe was too small for a sweep.
    #[serde(default)]
    pub trivial: bool,
}

fn members_of(assignment: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); k];
    for (u, &c) in assignment.iter().enumerate() {
        members[c].push(u);
    }
    members
}

fn sweep_ks(k_max: usize, stride: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = (2..=k_max).step_by(stride.max(1)).collect();
    if ks.last() != Some(&k_max) {
        ks.push(k_max);
    }
    ks
}

/// Full silhouette sweep over one dendrogram, then penalized selection.
pub fn select_k(universe: &LabelUniverse, options: &SelectOptions) -> Result<ClusterSolution, ClusterError> {
    let k_max = universe.len();
    if k_max <= 2 {
        return Err(ClusterError::DegenerateUniverse { unique_labels: k_max });
    }
    let points = universe.points();
    let dendrogram = Dendrogram::build(&points, options.linkage)?;
    let scorer = WeightedSilhouette::new(&points, &universe.multiplicity)?;
    let wanted = sweep_ks(k_max, options.stride);
    let mut cuts: Vec<(usize, Vec<usize>)> = dendrogram
        .cuts()
        .filter(|(k, _)| wanted.binary_search(k).is_ok())
        .collect();
    cuts.reverse();
    let mut curve_points = Vec::with_capacity(cuts.len());
    for (k, assignment) in &cuts {
        curve_points.push(CurvePoint {
            k: *k,
            s: scorer.score(assignment)?,
        });
    }
    let curve = SilhouetteCurve::new(curve_points)?;
    let lambda = match options.lambda_override {
        Some(l) if l.is_finite() => l,
        Some(l) => return Err(ClusterError::BadOverride(format!("lambda {l}"))),
        None => lambda_penalty(&curve)?,
    };
    let (rows, best) = score_curve(&curve, lambda);
    let (k, s) = match options.k_override {
        None => (rows[best].k, rows[best].s),
        Some(k) if (2..=k_max).contains(&k) => {
            let s = match curve.get(k) {
                Some(s) => s,
                None => scorer.score(&dendrogram.cut(k)?)?,
            };
            (k, s)
        }
        Some(k) => return Err(ClusterError::BadOverride(format!("k {k} outside [2, {k_max}]"))),
    };
    let assignment = dendrogram.cut(k)?;
    Ok(ClusterSolution {
        k,
        k_max,
        members: members_of(&assignment, k),
        assignment,
        s,
        lambda,
        s_adj: adjusted_silhouette(s, k, lambda),
        curve: rows,
        trivial: false,
    })
}

/// One cluster per unique label, for universes too small to sweep.
pub fn trivial_solution(universe: &LabelUniverse) -> ClusterSolution {
    let k = universe.len();
    let assignment: Vec<usize> = (0..k).collect();
    let s = if k >= 2 {
        WeightedSilhouette::new(&universe.points(), &universe.multiplicity)
            .and_then(|w| w.score(&assignment))
            .unwrap_or(0.0)
    } else {
        0.0
    };
    ClusterSolution {
        k,
        k_max: k,
        members: members_of(&assignment, k),
        assignment,
        s,
        lambda: 0.0,
        s_adj: s,
        curve: Vec::new(),
        trivial: true,
    }
}

/// [`select_k`], falling back to [`trivial_solution`] for tiny universes.
pub fn solve(universe: &LabelUniverse, options: &SelectOptions) -> Result<ClusterSolution, ClusterError> {
    match select_k(universe, options) {
        Err(ClusterError::DegenerateUniverse { .. }) if !universe.is_empty() => {
            Ok(trivial_solution(universe))
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_example() {
        let mut pts: Vec<CurvePoint> = (2..=10).map(|k| CurvePoint { k, s: 0.5 }).collect();
        pts[0].s = 0.1;
        pts[8].s = 0.9;
        let l = lambda_penalty(&SilhouetteCurve::new(pts).unwrap()).unwrap();
        assert!((l - 0.1).abs() < 1e-15);
    }

    #[test]
    fn flat_curve_zero_lambda() {
        let c = SilhouetteCurve::from_scores(&[0.4, 0.7, 0.4]).unwrap();
        assert_eq!(lambda_penalty(&c).unwrap(), 0.0);
    }

    #[test]
    fn lambda_needs_three_points() {
        let c = SilhouetteCurve::from_scores(&[0.4]).unwrap();
        assert!(matches!(
            lambda_penalty(&c),
            Err(ClusterError::DegenerateUniverse { .. })
        ));
    }

    #[test]
    fn adjusted_examples() {
        assert_eq!(adjusted_silhouette(0.42, 17, 0.0), 0.42);
        assert!((adjusted_silhouette(0.5, 100, 0.0013) - 0.37).abs() < 1e-12);
        let vals: Vec<f64> = (2..50).map(|k| adjusted_silhouette(0.5, k, 0.01)).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn synthetic_curve_picks_three() {
        let c = SilhouetteCurve::from_scores(&[0.2, 0.5, 0.52, 0.53]).unwrap();
        let l = lambda_penalty(&c).unwrap();
        assert!((l - 0.11).abs() < 1e-12);
        let (rows, best) = score_curve(&c, l);
        assert_eq!(rows[best].k, 3);
        let expected = [-0.02, 0.17, 0.08, -0.02];
        for (r, e) in rows.iter().zip(expected) {
            assert!((r.s_adj - e).abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn ties_prefer_smaller_k() {
        let c = SilhouetteCurve::from_scores(&[0.25, 0.5, 0.5, 0.25]).unwrap();
        let l = lambda_penalty(&c).unwrap();
        assert_eq!(l, 0.0);
        let (rows, best) = score_curve(&c, l);
        assert_eq!(rows[best].k, 3);
    }

    #[test]
    fn curve_must_increase() {
        assert!(SilhouetteCurve::new(vec![CurvePoint { k: 3, s: 0.0 }, CurvePoint { k: 3, s: 0.1 }]).is_err());
    }

    #[test]
    fn stride_keeps_k_max() {
        assert_eq!(sweep_ks(10, 4), [2, 6, 10]);
        assert_eq!(sweep_ks(9, 1), (2..=9).collect::<Vec<_>>());
        assert_eq!(sweep_ks(7, 5), [2, 7]);
    }
}
