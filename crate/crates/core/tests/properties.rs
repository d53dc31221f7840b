//! Invariants checked over generated inputs.

use proptest::collection::vec;
use proptest::prelude::*;

use scenetax::alignment::{conditional_mean, mean_top_score, percentile_threshold};
use scenetax::backend::EmbeddingVector;
use scenetax::cluster::{
    labels_in_multiple_clusters, select_k, Dendrogram, LabelIndex, LabelUniverse, Linkage, SelectOptions,
    WeightedSilhouette,
};
use scenetax::manifest::{read_manifest, write_manifest};
use scenetax::model::{Annotation, DatasetManifest, SampleRecord};
use scenetax::store::RunStore;

fn points(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=4).prop_flat_map(move |d| vec(vec(-10.0f64..10.0, d), n.clone()))
}

fn annotations(scores: &[f64]) -> Vec<Annotation> {
    scores
        .iter()
        .enumerate()
        .map(|(i, &s)| Annotation {
            sample_id: format!("s{i:04}"),
            candidates: Vec::new(),
            retained: None,
            top_score: s,
            relabel_history: Vec::new(),
        })
        .collect()
}

fn universe(pts: &[Vec<f64>], weights: &[usize]) -> LabelUniverse {
    let mut sample_ids = Vec::new();
    let mut sample_label = Vec::new();
    for (i, &m) in weights.iter().enumerate() {
        for r in 0..m {
            sample_ids.push(format!("s{i}-{r}"));
            sample_label.push(i);
        }
    }
    let index = LabelIndex {
        labels: (0..pts.len()).map(|i| format!("l{i}")).collect(),
        multiplicity: weights.to_vec(),
        sample_ids,
        sample_label,
    };
    let emb = pts.iter().map(|p| EmbeddingVector::new("st", p.clone()).unwrap()).collect();
    LabelUniverse::new(index, emb).unwrap()
}

/// Relabels clusters by first appearance, so equal partitions compare equal.
fn canonical(assignment: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    assignment
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ward_cuts_nest(pts in points(2..=30)) {
        let d = Dendrogram::build(&pts, Linkage::Ward).unwrap();
        let cuts: Vec<(usize, Vec<usize>)> = d.cuts().collect();
        prop_assert_eq!(cuts.len(), pts.len());
        for pair in cuts.windows(2) {
            let (fine, coarse) = if pair[0].0 > pair[1].0 { (&pair[0], &pair[1]) } else { (&pair[1], &pair[0]) };
            prop_assert_eq!(fine.0, coarse.0 + 1);
            // Points together at k+1 stay together at k.
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    if fine.1[i] == fine.1[j] {
                        prop_assert_eq!(coarse.1[i], coarse.1[j]);
                    }
                }
            }
        }
        for (k, a) in &cuts {
            prop_assert_eq!(a.iter().copied().max().unwrap() + 1, *k);
            prop_assert_eq!(canonical(a), a.clone());
        }
    }

    #[test]
    fn silhouette_ignores_point_order(
        pts in points(3..=20),
        seed in any::<u64>(),
    ) {
        let n = pts.len();
        let weights: Vec<usize> = (0..n).map(|i| 1 + (seed as usize >> (i % 16)) % 4).collect();
        let k = 2 + (seed as usize) % (n - 2);
        let assignment = Dendrogram::build(&pts, Linkage::Ward).unwrap().cut(k).unwrap();
        let s = WeightedSilhouette::new(&pts, &weights).unwrap().score(&assignment).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));

        let mut order: Vec<usize> = (0..n).collect();
        order.rotate_left((seed as usize) % n);
        order.reverse();
        let p2: Vec<_> = order.iter().map(|&i| pts[i].clone()).collect();
        let w2: Vec<_> = order.iter().map(|&i| weights[i]).collect();
        let a2: Vec<_> = order.iter().map(|&i| assignment[i]).collect();
        let s2 = WeightedSilhouette::new(&p2, &w2).unwrap().score(&a2).unwrap();
        prop_assert!((s - s2).abs() < 1e-12, "{} vs {}", s, s2);
    }

    #[test]
    fn selection_is_deterministic_and_keeps_labels_whole(
        pts in points(3..=25),
        weights in vec(1usize..5, 25),
    ) {
        let u = universe(&pts, &weights[..pts.len()]);
        let a = select_k(&u, &SelectOptions::default()).unwrap();
        let b = select_k(&u.clone(), &SelectOptions::default()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!((2..=u.len()).contains(&a.k));
        prop_assert!(a.curve.iter().all(|r| r.s_adj <= a.s_adj || r.k == a.k));
        let samples = u.sample_assignment(&a.assignment);
        let pairs = u.sample_ids.iter().enumerate().map(|(i, _)| (u.labels[u.sample_label[i]].as_str(), samples[i]));
        prop_assert_eq!(labels_in_multiple_clusters(pairs), 0);
    }

    #[test]
    fn conditional_mean_bounds(scores in vec(-1.0f64..=1.0, 1..80), x in 0.5f64..=100.0) {
        let ann = annotations(&scores);
        let st = conditional_mean(&ann, x).unwrap();
        prop_assert!(st.mu_x <= st.mu_c + 1e-12);
        prop_assert!(st.n_at_or_below >= 1 && st.n_at_or_below <= scores.len());
        prop_assert!(scores.contains(&st.p_x));
        prop_assert_eq!(st.mu_c, mean_top_score(&ann).unwrap());
        let full = conditional_mean(&ann, 100.0).unwrap();
        prop_assert!((full.mu_x - full.mu_c).abs() < 1e-12);

        let mut shuffled = ann.clone();
        shuffled.reverse();
        prop_assert_eq!(conditional_mean(&shuffled, x).unwrap(), st);
    }

    #[test]
    fn percentile_is_monotone(scores in vec(-1.0f64..=1.0, 1..80), a in 0.5f64..=100.0, b in 0.5f64..=100.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(percentile_threshold(&scores, lo).unwrap() <= percentile_threshold(&scores, hi).unwrap());
    }

    #[test]
    fn store_round_trips(payloads in vec(vec(any::<i64>(), 0..20), 1..6)) {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path().join("run")).unwrap();
        let mut last = None;
        for p in &payloads {
            let persisted = store.persist_stage("numbers", p).unwrap();
            let changed = last.as_ref() != Some(p);
            prop_assert_eq!(persisted.written, changed);
            last = Some(p.clone());
        }
        let reopened = RunStore::open(dir.path().join("run")).unwrap();
        prop_assert_eq!(reopened.load_stage::<Vec<i64>>("numbers").unwrap(), payloads.last().unwrap().clone());
        prop_assert_eq!(reopened.load_first_version::<Vec<i64>>("numbers").unwrap(), payloads[0].clone());
    }

    #[test]
    fn manifest_round_trips(ids in proptest::collection::btree_set("[a-z0-9_-]{1,12}", 1..30), rate in 8000u32..96000) {
        let samples: Vec<SampleRecord> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| SampleRecord {
                sample_id: id.clone(),
                audio_uri: format!("audio/{id}.wav"),
                duration_s: 0.5 + i as f64 * 0.25,
                sample_rate_hz: rate,
                dataset_id: "d".into(),
            })
            .collect();
        let manifest = DatasetManifest::new(samples).unwrap();
        let text = write_manifest(&manifest);
        prop_assert_eq!(read_manifest(text.as_bytes()).unwrap(), manifest);
    }
}
