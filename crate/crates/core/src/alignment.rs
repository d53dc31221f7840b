//! Audio/label alignment scores and their summary statistics.

use serde::{Deserialize, Serialize};

use crate::backend::EmbeddingVector;
use crate::model::{select_retained, Annotation, CandidateLabel, FLAGGED_SCORE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignmentError {
    #[error("no scores to summarize")]
    Empty,
    #[error("percentile {0} is outside (0, 100]")]
    PercentOutOfRange(f64),
    #[error("cannot score a zero-norm vector")]
    ZeroNorm,
    #[error("vectors live in different spaces ({0} vs {1})")]
    SpaceMismatch(String, String),
    #[error("vector dimensions differ ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("score {0} is not finite")]
    NonFinite(f64),
}

/// Cosine similarity between an audio and a text embedding, clamped to
/// [-1, 1].
pub fn clap_score(audio: &EmbeddingVector, text: &EmbeddingVector) -> Result<f64, AlignmentError> {
    if audio.space_id() != text.space_id() {
        return Err(AlignmentError::SpaceMismatch(
            audio.space_id().to_string(),
            text.space_id().to_string(),
        ));
    }
    if audio.dim() != text.dim() {
        return Err(AlignmentError::DimMismatch(audio.dim(), text.dim()));
    }
    if audio.norm() == 0.0 || text.norm() == 0.0 {
        return Err(AlignmentError::ZeroNorm);
    }
    let dot: f64 = audio
        .values()
        .iter()
        .zip(text.values())
        .map(|(a, b)| a * b)
        .sum();
    Ok((dot / (audio.norm() * text.norm())).clamp(-1.0, 1.0))
}

/// Builds the annotation for one sample. With no scored candidate the sample
/// is flagged (`retained = None`, `top_score = -1`).
pub fn retain_best(sample_id: impl Into<String>, candidates: Vec<CandidateLabel>) -> Annotation {
    let retained = select_retained(&candidates);
    let top_score = retained
        .and_then(|i| candidates[i].clap_score)
        .unwrap_or(FLAGGED_SCORE);
    Annotation {
        sample_id: sample_id.into(),
        candidates,
        retained,
        top_score,
        relabel_history: Vec::new(),
    }
}

/// 1-based nearest rank `ceil(x * n / 100)`, clamped to `[1, n]`.
pub fn nearest_rank(n: usize, x: f64) -> usize {
    let exact = x * n as f64 / 100.0;
    let rounded = exact.round();
    // absorb representation error such as 7.000000000000001
    let rank = if (exact - rounded).abs() <= 1e-9 * exact.abs().max(1.0) {
        rounded
    } else {
        exact.ceil()
    };
    (rank as usize).clamp(1, n.max(1))
}

fn check_percent(x: f64) -> Result<(), AlignmentError> {
    if x.is_finite() && x > 0.0 && x <= 100.0 {
        Ok(())
    } else {
        Err(AlignmentError::PercentOutOfRange(x))
    }
}

fn check_scores(scores: &[f64]) -> Result<(), AlignmentError> {
    if scores.is_empty() {
        return Err(AlignmentError::Empty);
    }
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(AlignmentError::NonFinite(bad));
    }
    Ok(())
}

/// Nearest-rank x-th percentile, no interpolation.
pub fn percentile_threshold(scores: &[f64], x: f64) -> Result<f64, AlignmentError> {
    check_percent(x)?;
    check_scores(scores)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank(sorted.len(), x) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentStats {
    pub mu_c: f64,
    pub percentile_x: f64,
    pub p_x: f64,
    pub mu_x: f64,
    pub n_samples: usize,
    pub n_at_or_below: usize,
}

fn sorted_by_id(annotations: &[Annotation]) -> Vec<(&str, f64)> {
    let mut pairs: Vec<(&str, f64)> = annotations
        .iter()
        .map(|a| (a.sample_id.as_str(), a.top_score))
        .collect();
    pairs.sort_by(|a, b| a.0.cmp(b.0));
    pairs
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn mean_top_score(annotations: &[Annotation]) -> Result<f64, AlignmentError> {
    let pairs = sorted_by_id(annotations);
    check_scores(&pairs.iter().map(|p| p.1).collect::<Vec<_>>())?;
    mean(pairs.into_iter().map(|p| p.1)).ok_or(AlignmentError::Empty)
}

/// μ_c, P_x and the mean of every top score at or below P_x. Sums run in
/// sample-id order so the result does not depend on input order.
pub fn conditional_mean(annotations: &[Annotation], x: f64) -> Result<AlignmentStats, AlignmentError> {
    check_percent(x)?;
    let pairs = sorted_by_id(annotations);
    let scores: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let p_x = percentile_threshold(&scores, x)?;
    let mu_c = mean(scores.iter().copied()).ok_or(AlignmentError::Empty)?;
    let below: Vec<f64> = scores.iter().copied().filter(|&s| s <= p_x).collect();
    let mu_x = mean(below.iter().copied()).ok_or(AlignmentError::Empty)?;
    Ok(AlignmentStats {
        mu_c,
        percentile_x: x,
        p_x,
        mu_x,
        n_samples: scores.len(),
        n_at_or_below: below.len(),
    })
}

/// Statistics over a fixed cohort of sample ids, with the threshold taken
/// from `baseline`. Used to compare the same samples before and after
/// review.
pub fn cohort_stats(
    annotations: &[Annotation],
    cohort: &[String],
    baseline: &AlignmentStats,
) -> Result<AlignmentStats, AlignmentError> {
    let pairs = sorted_by_id(annotations);
    let mu_c = mean(pairs.iter().map(|p| p.1)).ok_or(AlignmentError::Empty)?;
    let mut ids: Vec<&str> = cohort.iter().map(String::as_str).collect();
    ids.sort_unstable();
    let values: Vec<f64> = ids
        .iter()
        .filter_map(|id| {
            pairs
                .binary_search_by(|p| p.0.cmp(id))
                .ok()
                .map(|i| pairs[i].1)
        })
        .collect();
    if values.len() != ids.len() {
        return Err(AlignmentError::Empty);
    }
    let mu_x = mean(values.iter().copied()).ok_or(AlignmentError::Empty)?;
    Ok(AlignmentStats {
        mu_c,
        percentile_x: baseline.percentile_x,
        p_x: baseline.p_x,
        mu_x,
        n_samples: pairs.len(),
        n_at_or_below: values.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LabelSource;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new("clap", values.to_vec()).unwrap()
    }

    fn cand(text: &str, score: f64) -> CandidateLabel {
        CandidateLabel {
            raw_text: text.into(),
            cleaned_text: Some(text.into()),
            rejection: None,
            source: LabelSource::Mllm("m".into()),
            clap_score: Some(score),
        }
    }

    fn ann(id: &str, score: f64) -> Annotation {
        retain_best(id, vec![cand("x", score)])
    }

    #[test]
    fn cosine_examples() {
        let a = v(&[0.3, -2.0, 5.0]);
        assert!((clap_score(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(clap_score(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let s = clap_score(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(
            clap_score(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(AlignmentError::ZeroNorm)
        );
        let other = EmbeddingVector::new("st", vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            clap_score(&v(&[1.0, 0.0]), &other),
            Err(AlignmentError::SpaceMismatch(..))
        ));
        assert!(matches!(
            clap_score(&v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0])),
            Err(AlignmentError::DimMismatch(2, 3))
        ));
    }

    #[test]
    fn retain_examples() {
        let a = retain_best("s", vec![cand("dog bark", 0.7), cand("rain", 0.3)]);
        assert_eq!(a.retained_label(), Some("dog bark"));
        assert_eq!(a.top_score, 0.7);
        let a = retain_best("s", vec![cand("a", 0.5), cand("b", 0.5)]);
        assert_eq!(a.retained_label(), Some("a"));
        let a = retain_best("s", vec![]);
        assert!(a.is_flagged());
        assert_eq!(a.top_score, FLAGGED_SCORE);
        assert!(a.is_consistent());
    }

    #[test]
    fn rejected_candidates_never_win() {
        let mut rejected = cand("ignored", 0.99);
        rejected.cleaned_text = None;
        let a = retain_best("s", vec![rejected, cand("rain", 0.1)]);
        assert_eq!(a.retained_label(), Some("rain"));
    }

    #[test]
    fn mean_examples() {
        let anns: Vec<_> = [0.2, 0.4, 0.6, 0.8]
            .iter()
            .enumerate()
            .map(|(i, &s)| ann(&format!("s{i}"), s))
            .collect();
        assert!((mean_top_score(&anns).unwrap() - 0.5).abs() < 1e-15);
        let same: Vec<_> = (0..5).map(|i| ann(&format!("s{i}"), 0.3)).collect();
        assert_eq!(mean_top_score(&same).unwrap(), 0.3);
        assert_eq!(mean_top_score(&[]), Err(AlignmentError::Empty));
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile_threshold(&[0.1, 0.2, 0.3, 0.4], 50.0).unwrap(), 0.2);
        assert_eq!(percentile_threshold(&[0.3, 0.9, 0.1], 100.0).unwrap(), 0.9);
        assert_eq!(percentile_threshold(&[0.7], 1.0).unwrap(), 0.7);
        assert!(percentile_threshold(&[], 50.0).is_err());
        assert!(percentile_threshold(&[0.1], 0.0).is_err());
        assert!(percentile_threshold(&[0.1], 100.5).is_err());
    }

    #[test]
    fn nearest_rank_absorbs_rounding() {
        assert_eq!(nearest_rank(100, 7.0), 7);
        assert_eq!(nearest_rank(100, 0.07 * 100.0), 7);
        assert_eq!(nearest_rank(4, 50.0), 2);
        assert_eq!(nearest_rank(3, 50.0), 2);
        assert_eq!(nearest_rank(1000, 0.01), 1);
    }

    #[test]
    fn conditional_mean_example() {
        let anns: Vec<_> = [0.0, 0.1, 0.9, 1.0]
            .iter()
            .enumerate()
            .map(|(i, &s)| ann(&format!("s{i}"), s))
            .collect();
        let st = conditional_mean(&anns, 50.0).unwrap();
        assert_eq!(st.p_x, 0.1);
        assert!((st.mu_x - 0.05).abs() < 1e-15);
        assert_eq!(st.n_at_or_below, 2);
        let flat: Vec<_> = (0..7).map(|i| ann(&format!("s{i}"), -0.2)).collect();
        for x in [1.0, 33.0, 100.0] {
            assert!((conditional_mean(&flat, x).unwrap().mu_x + 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn ties_at_threshold_included() {
        let anns: Vec<_> = [0.1, 0.1, 0.1, 0.5]
            .iter()
            .enumerate()
            .map(|(i, &s)| ann(&format!("s{i}"), s))
            .collect();
        let st = conditional_mean(&anns, 25.0).unwrap();
        assert_eq!(st.n_at_or_below, 3);
    }
}
