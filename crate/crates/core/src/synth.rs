//! Deterministic synthetic corpus with planted clusters.
//!
//! Sixty clips fall into four themes with three labels each, five clips per
//! label. Labeler responses mix the planted label with distractors and
//! cleanup hazards; alignment embeddings make the planted label the best
//! match for its clip; sentence embeddings put each theme in its own tight
//! group. One clip gets a deliberately poor alignment score and a human
//! relabel whose alignment text embedding equals the clip's audio embedding.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::backend::fixture::embedding_file;
use crate::backend::prompt::composite_prompt;
use crate::composite::DistributionVector;
use crate::model::SampleRecord;
use crate::store::digest_bytes;

pub const DEFAULT_SEED: u64 = 60;
pub const DATASET_ID: &str = "corpus60";
pub const SAMPLE_RATE_HZ: u32 = 8000;
pub const DURATION_S: f64 = 0.25;

const THEMES: [&str; 4] = ["birds", "wind", "vehicles", "speech"];
const LABELS: [[&str; 3]; 4] = [
    ["birds chirping", "bird song", "birds singing"],
    ["wind blowing", "strong wind", "wind gusts"],
    ["car passing", "traffic noise", "engine running"],
    ["people talking", "man speaking", "crowd chatter"],
];
const COMPOSITES: [&str; 4] = [
    "A set of outdoor recordings dominated by birds chirping and singing.",
    "This collection of audio samples consists almost exclusively of recordings of the wind.",
    "Road recordings of passing cars, traffic and running engines.",
    "Recordings of people talking, from single speakers to crowd chatter.",
];
const PER_LABEL: usize = 5;
const N_SAMPLES: usize = 60;
const WEAK_SAMPLE: usize = 9;
const HUMAN_TEXT: &str = "Wind howling";
const HUMAN_LABEL: &str = "wind howling";
const GENERIC_DISTRACTORS: [&str; 2] = ["background noise", "distant hum"];

const RUN_TOML: &str = r#"# Offline run over the bundled synthetic corpus.
manifest = "manifest.jsonl"
store = "run"

[triage]
x = 1.0

[cluster]
linkage = "ward"

[backends.labeler]
backend_id = "fixture-mllm"
endpoint = "fixture:labeler"

[backends.alignment_embedder]
backend_id = "fixture-clap"
endpoint = "fixture:clap"

[backends.sentence_embedder]
backend_id = "fixture-sentence"
endpoint = "fixture:sentence"
"#;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanRelabel {
    pub sample_id: String,
    pub text: String,
}

/// The generated files, keyed by path relative to the corpus root.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub files: BTreeMap<PathBuf, Vec<u8>>,
    /// `(sample_id, theme)` for every clip.
    pub truth: Vec<(String, String)>,
    pub relabels: Vec<HumanRelabel>,
}

fn sample_id(j: usize) -> String {
    format!("clip-{j:02}")
}

fn theme_of(j: usize) -> usize {
    j % THEMES.len()
}

fn variant_of(j: usize) -> usize {
    (j / THEMES.len()) % 3
}

fn template_of(j: usize) -> usize {
    (j / THEMES.len()) / 3
}

fn title_case(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Labeler reply for clip `j`; every template cleans to the planted label.
fn response(j: usize) -> String {
    let (t, v) = (theme_of(j), variant_of(j));
    let label = LABELS[t][v];
    let other = LABELS[(t + 1) % 4][v];
    let (w1, w2) = label.split_once(' ').expect("planted labels are word pairs");
    match template_of(j) {
        0 => format!("{}, {}", title_case(label), title_case(other)),
        1 => format!("{label} , {},", GENERIC_DISTRACTORS[0]),
        2 => format!("{}\u{2014}{}!!, {}", w1.to_uppercase(), w2.to_uppercase(), GENERIC_DISTRACTORS[1]),
        3 => format!("{w1}\u{200B} {w2}, 日本語のラベル"),
        _ => format!("{} loudly in the distance, {other}", title_case(label)),
    }
}

fn unit(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

fn add(a: &mut [f64], b: &[f64], scale: f64) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += scale * y;
    }
}

// alignment space: 4 theme axes, 12 label axes, 1 weak-clip axis, 3 distractor axes
const CLAP_DIM: usize = 20;
// sentence space: 4 theme axes, 4 label slots per theme
const SENT_DIM: usize = 20;

fn clap_label(t: usize, v: usize) -> Vec<f64> {
    let mut e = unit(CLAP_DIM, t);
    add(&mut e, &unit(CLAP_DIM, 4 + 3 * t + v), 0.5);
    e
}

fn clap_distractor(i: usize) -> Vec<f64> {
    let mut e = unit(CLAP_DIM, 17 + i);
    add(&mut e, &unit(CLAP_DIM, 19), 0.3);
    e
}

fn sentence_label(t: usize, slot: usize, jitter: &[f64]) -> Vec<f64> {
    let mut e = unit(SENT_DIM, t);
    add(&mut e, &unit(SENT_DIM, 4 + 4 * t + slot), 0.25);
    add(&mut e, jitter, 1.0);
    e
}

/// 16-bit mono PCM WAV with a short tone.
fn wav(freq_hz: f64, amplitude: f64) -> Vec<u8> {
    let n = (SAMPLE_RATE_HZ as f64 * DURATION_S) as u32;
    let data_len = n * 2;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE_HZ.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE_HZ * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for i in 0..n {
        let phase = 2.0 * std::f64::consts::PI * freq_hz * i as f64 / SAMPLE_RATE_HZ as f64;
        let s = (amplitude * phase.sin() * i16::MAX as f64).round() as i16;
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

fn composite_key(counts: Vec<(String, usize)>) -> PathBuf {
    let dist = DistributionVector::from_counts(0, counts).expect("non-empty cluster");
    let prompt = composite_prompt(&dist.render()).expect("non-empty distribution");
    PathBuf::from("labeler/prompts").join(format!("{}.txt", digest_bytes(prompt.as_bytes())))
}

pub fn generate(seed: u64) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.04).expect("valid normal");
    let jitter = Normal::new(0.0, 0.01).expect("valid normal");
    let mut files: BTreeMap<PathBuf, Vec<u8>> = BTreeMap::new();
    let mut put = |path: String, bytes: Vec<u8>| {
        files.insert(PathBuf::from(path), bytes);
    };

    let mut manifest = String::new();
    let mut truth = Vec::with_capacity(N_SAMPLES);
    let mut weak_audio = Vec::new();
    for j in 0..N_SAMPLES {
        let id = sample_id(j);
        let (t, v) = (theme_of(j), variant_of(j));
        let record = SampleRecord {
            sample_id: id.clone(),
            audio_uri: format!("audio/{id}.wav"),
            duration_s: DURATION_S,
            sample_rate_hz: SAMPLE_RATE_HZ,
            dataset_id: DATASET_ID.into(),
        };
        manifest.push_str(&serde_json::to_string(&record).expect("record serializes"));
        manifest.push('\n');
        put(format!("audio/{id}.wav"), wav(220.0 * (t + 1) as f64 + 20.0 * v as f64, 0.3));
        put(format!("labeler/labels/{id}.txt"), response(j).into_bytes());
        let mut audio = clap_label(t, v);
        if j == WEAK_SAMPLE {
            add(&mut audio, &unit(CLAP_DIM, 16), 1.0);
        }
        for x in audio.iter_mut() {
            *x += noise.sample(&mut rng);
        }
        if j == WEAK_SAMPLE {
            weak_audio = audio.clone();
        }
        put(format!("clap/audio/{id}.json"), embedding_file(&audio).into_bytes());
        truth.push((id, THEMES[t].to_string()));
    }
    put("manifest.jsonl".into(), manifest.into_bytes());

    let text_file = |space: &str, text: &str| format!("{space}/text/{}.json", digest_bytes(text.as_bytes()));
    for (t, labels) in LABELS.iter().enumerate() {
        for (v, label) in labels.iter().enumerate() {
            put(text_file("clap", label), embedding_file(&clap_label(t, v)).into_bytes());
            let j: Vec<f64> = (0..SENT_DIM).map(|_| jitter.sample(&mut rng)).collect();
            put(text_file("sentence", label), embedding_file(&sentence_label(t, v, &j)).into_bytes());
        }
    }
    for (i, d) in GENERIC_DISTRACTORS.iter().enumerate() {
        put(text_file("clap", d), embedding_file(&clap_distractor(i)).into_bytes());
    }
    put(text_file("clap", HUMAN_LABEL), embedding_file(&weak_audio).into_bytes());
    let j: Vec<f64> = (0..SENT_DIM).map(|_| jitter.sample(&mut rng)).collect();
    put(text_file("sentence", HUMAN_LABEL), embedding_file(&sentence_label(1, 3, &j)).into_bytes());

    // composite replies, before and after the planted relabel
    for (t, labels) in LABELS.iter().enumerate() {
        let counts: Vec<(String, usize)> = labels.iter().map(|l| (l.to_string(), PER_LABEL)).collect();
        put(composite_key(counts.clone()).to_string_lossy().into_owned(), COMPOSITES[t].as_bytes().to_vec());
        if t == theme_of(WEAK_SAMPLE) {
            let mut relabeled = counts;
            relabeled[variant_of(WEAK_SAMPLE)].1 -= 1;
            relabeled.push((HUMAN_LABEL.to_string(), 1));
            put(composite_key(relabeled).to_string_lossy().into_owned(), COMPOSITES[t].as_bytes().to_vec());
        }
    }

    let relabels = vec![HumanRelabel {
        sample_id: sample_id(WEAK_SAMPLE),
        text: HUMAN_TEXT.into(),
    }];
    let mut truth_tsv = String::from("sample_id\ttheme\n");
    for (id, theme) in &truth {
        truth_tsv.push_str(&format!("{id}\t{theme}\n"));
    }
    put("truth.tsv".into(), truth_tsv.into_bytes());
    let mut review = serde_json::to_vec_pretty(&relabels).expect("relabels serialize");
    review.push(b'\n');
    put("review.json".into(), review);
    put("run.toml".into(), RUN_TOML.as_bytes().to_vec());

    SynthCorpus {
        files,
        truth,
        relabels,
    }
}

impl SynthCorpus {
    pub fn write_to(&self, root: &Path) -> io::Result<()> {
        for (rel, bytes) in &self.files {
            let path = root.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, bytes)?;
        }
        Ok(())
    }

    /// Relative paths whose on-disk bytes differ from the generated ones.
    pub fn diff_against(&self, root: &Path) -> Vec<PathBuf> {
        self.files
            .iter()
            .filter(|(rel, bytes)| std::fs::read(root.join(rel)).ok().as_deref() != Some(bytes.as_slice()))
            .map(|(rel, _)| rel.clone())
            .collect()
    }

    pub fn planted_theme(&self, sample_id: &str) -> Option<&str> {
        self.truth
            .iter()
            .find(|(id, _)| id == sample_id)
            .map(|(_, t)| t.as_str())
    }
}
