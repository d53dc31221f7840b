//! Run summary tables.
//!
//! [`build_report`] computes every figure from stage data; [`render_text`]
//! only formats. Numbers are printed with four decimals.

use serde::{Deserialize, Serialize};

use crate::alignment::mean_top_score;
use crate::composite::CompositeLabel;
use crate::error::{Error, Result};
use crate::model::Annotation;
use crate::pipeline::ClustersOutput;
use crate::triage::TriageState;

pub const TOP_CLUSTERS: usize = 3;
const NA: &str = "n/a";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuCRow {
    pub dataset_id: String,
    pub backend_id: String,
    pub n_samples: usize,
    pub mu_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRow {
    pub dataset_id: String,
    pub x: f64,
    pub cohort_size: usize,
    pub relabeled: usize,
    /// `None` when nobody relabeled anything.
    pub mu_x_before: Option<f64>,
    pub mu_x_after: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub dataset_id: String,
    pub k_max: usize,
    pub lambda: f64,
    pub k: usize,
    pub s: f64,
    pub s_adj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub cluster_id: usize,
    pub size: usize,
    pub distribution: String,
    pub composite: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub mu_c: Vec<MuCRow>,
    pub review: ReviewRow,
    pub selection: SelectionRow,
    pub top_clusters: Vec<ClusterRow>,
    pub labels_in_multiple_clusters: usize,
}

pub fn build_report(
    dataset_id: &str,
    labeler_id: &str,
    scores: &[Annotation],
    triage: &TriageState,
    clusters: &ClustersOutput,
    composites: &[CompositeLabel],
    x: f64,
) -> Result<Report> {
    let mu_c = mean_top_score(scores)?;
    let impact = triage.impact(x)?;
    let relabeled = triage.relabel_count();
    let (before, after, delta) = if relabeled == 0 {
        (None, None, None)
    } else {
        (Some(impact.mu_x_before), Some(impact.mu_x_after), Some(impact.delta))
    };
    let sol = &clusters.solution;
    let mut order: Vec<&CompositeLabel> = composites.iter().collect();
    if order.len() != sol.k {
        return Err(Error::Validation(format!(
            "{} composite labels for {} clusters",
            order.len(),
            sol.k
        )));
    }
    order.sort_by(|a, b| b.size.cmp(&a.size).then(a.cluster_id.cmp(&b.cluster_id)));
    Ok(Report {
        mu_c: vec![MuCRow {
            dataset_id: dataset_id.to_string(),
            backend_id: labeler_id.to_string(),
            n_samples: scores.len(),
            mu_c,
        }],
        review: ReviewRow {
            dataset_id: dataset_id.to_string(),
            x,
            cohort_size: impact.cohort_size,
            relabeled,
            mu_x_before: before,
            mu_x_after: after,
            delta,
        },
        selection: SelectionRow {
            dataset_id: dataset_id.to_string(),
            k_max: sol.k_max,
            lambda: sol.lambda,
            k: sol.k,
            s: sol.s,
            s_adj: sol.s_adj,
        },
        top_clusters: order
            .into_iter()
            .take(TOP_CLUSTERS)
            .map(|c| ClusterRow {
                cluster_id: c.cluster_id,
                size: c.size,
                distribution: c.distribution.clone(),
                composite: c.sentence.clone(),
            })
            .collect(),
        labels_in_multiple_clusters: clusters.labels_in_multiple_clusters,
    })
}

/// Four-decimal rendering used for every real number in the report.
pub fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), fmt4)
}

fn fmt_x(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}%")
    } else {
        format!("{x}%")
    }
}

fn table(title: &str, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = format!("{title}\n");
    out.push_str(&line(header.to_vec()));
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&line(rule.iter().map(String::as_str).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

pub fn render_text(r: &Report) -> String {
    let mut out = String::new();
    out.push_str(&table(
        "Mean top alignment score",
        &["dataset", "labeler", "samples", "mu_c"],
        &r.mu_c
            .iter()
            .map(|m| vec![m.dataset_id.clone(), m.backend_id.clone(), m.n_samples.to_string(), fmt4(m.mu_c)])
            .collect::<Vec<_>>(),
    ));
    out.push('\n');
    let v = &r.review;
    out.push_str(&table(
        "Bottom-x% alignment before and after review",
        &["dataset", "x", "cohort", "relabeled", "before", "after", "delta"],
        &[vec![
            v.dataset_id.clone(),
            fmt_x(v.x),
            v.cohort_size.to_string(),
            v.relabeled.to_string(),
            fmt_opt(v.mu_x_before),
            fmt_opt(v.mu_x_after),
            fmt_opt(v.delta),
        ]],
    ));
    out.push('\n');
    let s = &r.selection;
    out.push_str(&table(
        "Cluster count selection",
        &["dataset", "k_max", "lambda", "k", "s", "s_adj"],
        &[vec![
            s.dataset_id.clone(),
            s.k_max.to_string(),
            fmt4(s.lambda),
            s.k.to_string(),
            fmt4(s.s),
            fmt4(s.s_adj),
        ]],
    ));
    out.push('\n');
    out.push_str(&table(
        "Largest clusters",
        &["cluster", "size", "distribution", "composite label"],
        &r.top_clusters
            .iter()
            .map(|c| vec![c.cluster_id.to_string(), c.size.to_string(), c.distribution.clone(), c.composite.clone()])
            .collect::<Vec<_>>(),
    ));
    out.push('\n');
    out.push_str(&format!(
        "labels in more than one cluster: {}\n",
        r.labels_in_multiple_clusters
    ));
    out
}
