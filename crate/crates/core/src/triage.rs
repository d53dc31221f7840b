//! Human review of the worst-aligned samples.
//!
//! The review cohort is fixed by the scores as they were before any human
//! input: a sample is queued for a given `x` when its pre-review score is at
//! or below the pre-review `P_x`. Relabels change current scores but never
//! move samples in or out of the queue, so before/after figures always
//! describe the same samples.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::alignment::{clap_score, cohort_stats, conditional_mean, percentile_threshold, AlignmentError, AlignmentStats};
use crate::backend::{Gateway, GatewayError};
use crate::model::{select_retained, Annotation, CandidateLabel, DatasetManifest, LabelSource, RelabelEntry, SampleRecord};
use crate::text::{clean_label, CleanupPolicy, Rejection};

#[derive(Debug, thiserror::Error)]
pub enum TriageError {
    #[error("no scored annotations")]
    NoScores,
    #[error("unknown sample {0:?}")]
    UnknownSample(String),
    #[error("sample {sample_id:?} is not in the review queue at x = {x}")]
    NotInQueue { sample_id: String, x: f64 },
    #[error("{0}")]
    Rejected(Rejection),
    #[error("sample {0:?} was already relabeled")]
    AlreadyRelabeled(String),
    #[error("impact inputs differ: {0}")]
    Mismatch(String),
    #[error("annotations do not match the manifest: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Backend(#[from] GatewayError),
}

impl TriageError {
    /// Errors caused by the request rather than the service.
    pub fn is_client_error(&self) -> bool {
        !matches!(self, TriageError::Backend(_) | TriageError::Inconsistent(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueStatus {
    #[default]
    Pending,
    Relabeled,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewQueueEntry {
    pub sample_id: String,
    pub audio_uri: String,
    pub current_label: Option<String>,
    pub current_score: f64,
    /// Score before review; the queue order.
    pub baseline_score: f64,
    pub rank: usize,
    pub status: QueueStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelEvent {
    pub sample_id: String,
    pub human_label_raw: String,
    pub human_label_cleaned: String,
    pub new_score: f64,
    pub timestamp_ms: u64,
}

/// Samples whose score is at or below the nearest-rank `P_x`, ascending by
/// score with ties in sample-id order.
pub fn queue_members(annotations: &[Annotation], x: f64) -> Result<Vec<&Annotation>, TriageError> {
    if annotations.is_empty() {
        return Err(TriageError::NoScores);
    }
    let scores: Vec<f64> = annotations.iter().map(|a| a.top_score).collect();
    let p_x = percentile_threshold(&scores, x)?;
    let mut members: Vec<&Annotation> = annotations.iter().filter(|a| a.top_score <= p_x).collect();
    members.sort_by(|a, b| {
        a.top_score
            .total_cmp(&b.top_score)
            .then_with(|| a.sample_id.cmp(&b.sample_id))
    });
    Ok(members)
}

/// The bottom-x% queue of a set of scored annotations, all pending.
pub fn build_queue(
    annotations: &[Annotation],
    manifest: &DatasetManifest,
    x: f64,
) -> Result<Vec<ReviewQueueEntry>, TriageError> {
    queue_members(annotations, x)?
        .into_iter()
        .enumerate()
        .map(|(i, a)| {
            let record = manifest
                .get(&a.sample_id)
                .ok_or_else(|| TriageError::UnknownSample(a.sample_id.clone()))?;
            Ok(ReviewQueueEntry {
                sample_id: a.sample_id.clone(),
                audio_uri: record.audio_uri.clone(),
                current_label: a.retained_label().map(str::to_string),
                current_score: a.top_score,
                baseline_score: a.top_score,
                rank: i + 1,
                status: QueueStatus::Pending,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub x: f64,
    pub mu_x_before: f64,
    pub mu_x_after: f64,
    pub delta: f64,
    pub cohort_size: usize,
}

/// Before/after comparison of μ_x% for one cohort.
pub fn impact_report(before: &AlignmentStats, after: &AlignmentStats) -> Result<ImpactReport, TriageError> {
    if before.percentile_x != after.percentile_x {
        return Err(TriageError::Mismatch(format!(
            "x = {} vs {}",
            before.percentile_x, after.percentile_x
        )));
    }
    if before.n_samples != after.n_samples || before.n_at_or_below != after.n_at_or_below {
        return Err(TriageError::Mismatch("different sample universes".into()));
    }
    Ok(ImpactReport {
        x: before.percentile_x,
        mu_x_before: before.mu_x,
        mu_x_after: after.mu_x,
        delta: after.mu_x - before.mu_x,
        cohort_size: before.n_at_or_below,
    })
}

/// Persistable review state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageState {
    /// Annotations as scored before review; never modified.
    pub baseline: Vec<Annotation>,
    pub current: Vec<Annotation>,
    #[serde(default)]
    pub status: BTreeMap<String, QueueStatus>,
    #[serde(default)]
    pub events: Vec<RelabelEvent>,
}

impl TriageState {
    pub fn new(scored: Vec<Annotation>) -> Self {
        Self {
            baseline: scored.clone(),
            current: scored,
            status: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    /// μ_x% of the pre-review cohort, before and after review.
    pub fn impact(&self, x: f64) -> Result<ImpactReport, TriageError> {
        let before = conditional_mean(&self.baseline, x)?;
        let cohort: Vec<String> = queue_members(&self.baseline, x)?
            .into_iter()
            .map(|a| a.sample_id.clone())
            .collect();
        let after = cohort_stats(&self.current, &cohort, &before)?;
        impact_report(&before, &after)
    }

    pub fn relabel_count(&self) -> usize {
        self.status
            .values()
            .filter(|s| **s == QueueStatus::Relabeled)
            .count()
    }
}

/// What the reviewer sees for one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleView {
    pub sample: SampleRecord,
    pub annotation: Annotation,
    pub baseline_score: f64,
    pub status: QueueStatus,
}

/// A cleaned relabel waiting for its score.
#[derive(Debug, Clone)]
pub struct PendingRelabel {
    pub sample: SampleRecord,
    pub raw: String,
    pub cleaned: String,
}

pub enum Prepared {
    /// Same text as the last accepted relabel; nothing to do.
    Unchanged(RelabelEvent),
    Score(PendingRelabel),
}

#[derive(Debug, Clone)]
pub struct TriageSession {
    manifest: DatasetManifest,
    state: TriageState,
    index: HashMap<String, usize>,
    policy: CleanupPolicy,
}

impl TriageSession {
    pub fn new(manifest: DatasetManifest, state: TriageState) -> Result<Self, TriageError> {
        if state.baseline.is_empty() {
            return Err(TriageError::NoScores);
        }
        if state.baseline.len() != state.current.len() {
            return Err(TriageError::Inconsistent("baseline and current differ in length".into()));
        }
        let mut index = HashMap::with_capacity(state.current.len());
        for (i, (b, c)) in state.baseline.iter().zip(&state.current).enumerate() {
            if b.sample_id != c.sample_id {
                return Err(TriageError::Inconsistent(format!("sample order differs at {i}")));
            }
            if manifest.get(&c.sample_id).is_none() {
                return Err(TriageError::Inconsistent(format!("{:?} is not in the manifest", c.sample_id)));
            }
            index.insert(c.sample_id.clone(), i);
        }
        Ok(Self {
            manifest,
            state,
            index,
            policy: CleanupPolicy::default(),
        })
    }

    pub fn state(&self) -> &TriageState {
        &self.state
    }

    pub fn into_state(self) -> TriageState {
        self.state
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    fn position(&self, sample_id: &str) -> Result<usize, TriageError> {
        self.index
            .get(sample_id)
            .copied()
            .ok_or_else(|| TriageError::UnknownSample(sample_id.to_string()))
    }

    fn status_of(&self, sample_id: &str) -> QueueStatus {
        self.state.status.get(sample_id).copied().unwrap_or_default()
    }

    pub fn queue(&self, x: f64) -> Result<Vec<ReviewQueueEntry>, TriageError> {
        queue_members(&self.state.baseline, x)?
            .into_iter()
            .enumerate()
            .map(|(i, base)| {
                let current = &self.state.current[self.position(&base.sample_id)?];
                let record = self
                    .manifest
                    .get(&base.sample_id)
                    .ok_or_else(|| TriageError::UnknownSample(base.sample_id.clone()))?;
                Ok(ReviewQueueEntry {
                    sample_id: base.sample_id.clone(),
                    audio_uri: record.audio_uri.clone(),
                    current_label: current.retained_label().map(str::to_string),
                    current_score: current.top_score,
                    baseline_score: base.top_score,
                    rank: i + 1,
                    status: self.status_of(&base.sample_id),
                })
            })
            .collect()
    }

    fn queue_entry(&self, sample_id: &str, x: f64) -> Result<ReviewQueueEntry, TriageError> {
        self.queue(x)?
            .into_iter()
            .find(|e| e.sample_id == sample_id)
            .ok_or_else(|| TriageError::NotInQueue {
                sample_id: sample_id.to_string(),
                x,
            })
    }

    pub fn sample(&self, sample_id: &str) -> Result<SampleView, TriageError> {
        let i = self.position(sample_id)?;
        Ok(SampleView {
            sample: self
                .manifest
                .get(sample_id)
                .cloned()
                .ok_or_else(|| TriageError::UnknownSample(sample_id.to_string()))?,
            annotation: self.state.current[i].clone(),
            baseline_score: self.state.baseline[i].top_score,
            status: self.status_of(sample_id),
        })
    }

    /// Validates and cleans a relabel without touching state.
    pub fn prepare_relabel(&self, sample_id: &str, text: &str, x: f64) -> Result<Prepared, TriageError> {
        self.position(sample_id)?;
        self.queue_entry(sample_id, x)?;
        let cleaned = clean_label(text, &self.policy).map_err(TriageError::Rejected)?;
        if self.status_of(sample_id) == QueueStatus::Relabeled {
            if let Some(last) = self.state.events.iter().rev().find(|e| e.sample_id == sample_id) {
                if last.human_label_cleaned == cleaned {
                    return Ok(Prepared::Unchanged(last.clone()));
                }
            }
        }
        Ok(Prepared::Score(PendingRelabel {
            sample: self.manifest.get(sample_id).cloned().expect("queued samples are in the manifest"),
            raw: text.to_string(),
            cleaned,
        }))
    }

    /// Records a scored human label; it becomes the retained label
    /// regardless of how its score compares with the machine labels.
    pub fn apply_relabel(&mut self, pending: PendingRelabel, score: f64, timestamp_ms: u64) -> Result<RelabelEvent, TriageError> {
        if !score.is_finite() {
            return Err(AlignmentError::NonFinite(score).into());
        }
        let i = self.position(&pending.sample.sample_id)?;
        let ann = &mut self.state.current[i];
        let previous_label = ann.retained_label().map(str::to_string);
        ann.candidates.push(CandidateLabel {
            raw_text: pending.raw.clone(),
            cleaned_text: Some(pending.cleaned.clone()),
            rejection: None,
            source: LabelSource::Human,
            clap_score: Some(score),
        });
        ann.retained = select_retained(&ann.candidates);
        ann.top_score = score;
        ann.relabel_history.push(RelabelEntry {
            timestamp_ms,
            previous_label,
            new_label: pending.cleaned.clone(),
        });
        self.state
            .status
            .insert(pending.sample.sample_id.clone(), QueueStatus::Relabeled);
        let event = RelabelEvent {
            sample_id: pending.sample.sample_id,
            human_label_raw: pending.raw,
            human_label_cleaned: pending.cleaned,
            new_score: score,
            timestamp_ms,
        };
        self.state.events.push(event.clone());
        Ok(event)
    }

    /// Cleans, scores and records a relabel in one step.
    pub fn submit_relabel(
        &mut self,
        sample_id: &str,
        text: &str,
        x: f64,
        aligner: &Gateway,
        timestamp_ms: u64,
    ) -> Result<(RelabelEvent, ReviewQueueEntry), TriageError> {
        let event = match self.prepare_relabel(sample_id, text, x)? {
            Prepared::Unchanged(ev) => ev,
            Prepared::Score(pending) => {
                let score = score_label(aligner, &pending.sample, &pending.cleaned)?;
                self.apply_relabel(pending, score, timestamp_ms)?
            }
        };
        Ok((event, self.queue_entry(sample_id, x)?))
    }

    /// Defers a queued sample; it keeps its machine label.
    pub fn skip(&mut self, sample_id: &str, x: f64) -> Result<ReviewQueueEntry, TriageError> {
        self.position(sample_id)?;
        self.queue_entry(sample_id, x)?;
        match self.status_of(sample_id) {
            QueueStatus::Relabeled => return Err(TriageError::AlreadyRelabeled(sample_id.to_string())),
            QueueStatus::Skipped => {}
            QueueStatus::Pending => {
                self.state
                    .status
                    .insert(sample_id.to_string(), QueueStatus::Skipped);
            }
        }
        self.queue_entry(sample_id, x)
    }

    pub fn impact(&self, x: f64) -> Result<ImpactReport, TriageError> {
        self.state.impact(x)
    }
}

/// CLAP score of a label against a sample's audio.
pub fn score_label(aligner: &Gateway, sample: &SampleRecord, label: &str) -> Result<f64, TriageError> {
    let audio = aligner.embed_audio(sample)?;
    let text = aligner.embed_text(label)?;
    Ok(clap_score(&audio, &text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::retain_best;

    fn manifest(n: usize) -> DatasetManifest {
        DatasetManifest::new(
            (0..n)
                .map(|i| SampleRecord {
                    sample_id: format!("s{i}"),
                    audio_uri: format!("audio/s{i}.wav"),
                    duration_s: 1.0,
                    sample_rate_hz: 16000,
                    dataset_id: "d".into(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn scored(scores: &[f64]) -> Vec<Annotation> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                retain_best(
                    format!("s{i}"),
                    vec![CandidateLabel {
                        raw_text: "machine".into(),
                        cleaned_text: Some("machine".into()),
                        rejection: None,
                        source: LabelSource::Mllm("m".into()),
                        clap_score: Some(s),
                    }],
                )
            })
            .collect()
    }

    fn pending(session: &TriageSession, id: &str, text: &str) -> PendingRelabel {
        match session.prepare_relabel(id, text, 50.0).unwrap() {
            Prepared::Score(p) => p,
            Prepared::Unchanged(_) => panic!("expected a new relabel"),
        }
    }

    #[test]
    fn queue_example() {
        let anns = scored(&[0.9, 0.1, 0.5, 0.1]);
        let q = build_queue(&anns, &manifest(4), 50.0).unwrap();
        let ids: Vec<_> = q.iter().map(|e| e.sample_id.as_str()).collect();
        assert_eq!(ids, ["s1", "s3"]);
        assert_eq!(q.iter().map(|e| e.rank).collect::<Vec<_>>(), [1, 2]);
        let all = build_queue(&anns, &manifest(4), 100.0).unwrap();
        let scores: Vec<_> = all.iter().map(|e| e.current_score).collect();
        assert_eq!(scores, [0.1, 0.1, 0.5, 0.9]);
    }

    #[test]
    fn one_percent_of_hundred() {
        let scores: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 / 100.0 + 0.001).collect();
        let q = build_queue(&scored(&scores), &manifest(100), 1.0).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].current_score, 0.001);
    }

    #[test]
    fn empty_scores_rejected() {
        assert!(matches!(build_queue(&[], &manifest(1), 1.0), Err(TriageError::NoScores)));
    }

    #[test]
    fn human_label_overrides_higher_machine_score() {
        let mut s = TriageSession::new(manifest(4), TriageState::new(scored(&[0.9, 0.3, 0.5, 0.1]))).unwrap();
        let p = pending(&s, "s3", "Wind noise!");
        assert_eq!(p.cleaned, "wind noise");
        let ev = s.apply_relabel(p, 0.05, 7).unwrap();
        assert_eq!(ev.new_score, 0.05);
        let view = s.sample("s3").unwrap();
        assert_eq!(view.annotation.retained_label(), Some("wind noise"));
        assert!(view.annotation.is_human_retained());
        assert!(view.annotation.is_consistent());
        assert_eq!(view.annotation.relabel_history.len(), 1);
        assert_eq!(view.status, QueueStatus::Relabeled);
        assert_eq!(view.baseline_score, 0.1);
        // re-running retention keeps the human label
        let again = retain_best("s3", view.annotation.candidates.clone());
        assert_eq!(again.retained_label(), Some("wind noise"));
    }

    #[test]
    fn rejection_leaves_state_alone() {
        let s = TriageSession::new(manifest(2), TriageState::new(scored(&[0.2, 0.8]))).unwrap();
        let before = s.state().clone();
        let err = s.prepare_relabel("s0", "!!!", 50.0).err().unwrap();
        assert!(matches!(err, TriageError::Rejected(Rejection::Empty)));
        assert_eq!(err.to_string(), "label empty after cleanup");
        assert_eq!(s.state(), &before);
    }

    #[test]
    fn unqueued_and_unknown() {
        let mut s = TriageSession::new(manifest(2), TriageState::new(scored(&[0.2, 0.8]))).unwrap();
        assert!(matches!(
            s.prepare_relabel("s1", "rain", 50.0),
            Err(TriageError::NotInQueue { .. })
        ));
        assert!(matches!(s.skip("nope", 50.0), Err(TriageError::UnknownSample(_))));
        assert!(matches!(s.skip("s1", 50.0), Err(TriageError::NotInQueue { .. })));
        assert!(matches!(s.sample("nope"), Err(TriageError::UnknownSample(_))));
    }

    #[test]
    fn same_text_is_idempotent() {
        let mut s = TriageSession::new(manifest(2), TriageState::new(scored(&[0.2, 0.8]))).unwrap();
        let p = pending(&s, "s0", "rain");
        s.apply_relabel(p, 0.6, 1).unwrap();
        let snapshot = s.state().clone();
        assert!(matches!(
            s.prepare_relabel("s0", " RAIN ", 50.0).unwrap(),
            Prepared::Unchanged(_)
        ));
        assert_eq!(s.state(), &snapshot);
        assert!(matches!(s.prepare_relabel("s0", "rain drops", 50.0).unwrap(), Prepared::Score(_)));
    }

    #[test]
    fn skip_keeps_machine_label() {
        let mut s = TriageSession::new(manifest(2), TriageState::new(scored(&[0.2, 0.8]))).unwrap();
        let e = s.skip("s0", 50.0).unwrap();
        assert_eq!(e.status, QueueStatus::Skipped);
        assert_eq!(e.current_label.as_deref(), Some("machine"));
        assert_eq!(s.skip("s0", 50.0).unwrap(), e);
        let p = pending(&s, "s0", "rain");
        s.apply_relabel(p, 0.4, 2).unwrap();
        assert!(matches!(s.skip("s0", 50.0), Err(TriageError::AlreadyRelabeled(_))));
    }

    #[test]
    fn impact_tracks_frozen_cohort() {
        let mut s = TriageSession::new(manifest(4), TriageState::new(scored(&[0.9, 0.1, 0.5, 0.3]))).unwrap();
        let none = s.impact(50.0).unwrap();
        assert_eq!(none.delta, 0.0);
        assert_eq!(none.cohort_size, 2);
        let p = pending(&s, "s1", "rain");
        s.apply_relabel(p, 0.7, 3).unwrap();
        let r = s.impact(50.0).unwrap();
        assert!((r.mu_x_before - 0.2).abs() < 1e-15);
        assert!((r.mu_x_after - 0.5).abs() < 1e-15);
        assert!((r.delta - 0.3).abs() < 1e-15);
        // the raised sample stays in the queue at its original rank
        let q = s.queue(50.0).unwrap();
        assert_eq!(q[0].sample_id, "s1");
        assert_eq!(q[0].status, QueueStatus::Relabeled);
        assert_eq!(q[0].current_score, 0.7);
        assert_eq!(s.impact(50.0).unwrap().mu_x_before, none.mu_x_before);
    }

    #[test]
    fn impact_report_checks_inputs() {
        let a = conditional_mean(&scored(&[0.1, 0.2]), 50.0).unwrap();
        let b = conditional_mean(&scored(&[0.1, 0.2]), 100.0).unwrap();
        assert!(matches!(impact_report(&a, &b), Err(TriageError::Mismatch(_))));
        let c = conditional_mean(&scored(&[0.1, 0.2, 0.3]), 50.0).unwrap();
        assert!(matches!(impact_report(&a, &c), Err(TriageError::Mismatch(_))));
        let mut after = a.clone();
        after.mu_x = 0.22;
        let mut before = a.clone();
        before.mu_x = 0.07;
        assert!((impact_report(&before, &after).unwrap().delta - 0.15).abs() < 1e-12);
    }

    #[test]
    fn state_round_trips() {
        let mut s = TriageSession::new(manifest(3), TriageState::new(scored(&[0.2, 0.8, 0.4]))).unwrap();
        let p = pending(&s, "s0", "rain");
        s.apply_relabel(p, 0.5, 9).unwrap();
        let json = serde_json::to_string(s.state()).unwrap();
        let back: TriageState = serde_json::from_str(&json).unwrap();
        assert_eq!(&back, s.state());
    }
}
