//! Staged, resumable pipeline runs.
//!
//! Each stage payload records the digests of the stages it was computed
//! from plus the settings that shaped it. Before computing a stage the
//! runner compares those inputs with the stored head; on a match the stage
//! is skipped without touching any backend.

use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::alignment::{clap_score, retain_best};
use crate::backend::{initial_prompt, local_audio_path, Gateway, GatewayError, Role};
use crate::cluster::{build_universe, labels_in_multiple_clusters, solve, ClusterSolution, LabelUniverse, SelectOptions};
use crate::composite::{compose_cluster_label, CompositeLabel, DistributionVector};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::manifest::read_manifest;
use crate::model::{Annotation, CandidateLabel, DatasetManifest, LabelSource};
use crate::report::{build_report, Report};
use crate::store::{digest_bytes, RunStore, StoreError};
use crate::text::{clean_label, split_labels, CleanupPolicy};
use crate::triage::{build_queue, QueueStatus, RelabelEvent, TriageSession, TriageState};

pub mod stages {
    pub const CONFIG: &str = "config";
    pub const LABELS: &str = "labels";
    pub const CANDIDATES: &str = "candidates";
    pub const SCORES: &str = "scores";
    pub const TRIAGE: &str = "triage";
    pub const EMBEDDINGS: &str = "embeddings";
    pub const CLUSTERS: &str = "clusters";
    pub const COMPOSITES: &str = "composites";
    pub const REPORT: &str = "report";

    /// Pipeline order, excluding the config snapshot.
    pub const ORDER: [&str; 8] = [LABELS, CANDIDATES, SCORES, TRIAGE, EMBEDDINGS, CLUSTERS, COMPOSITES, REPORT];
}

/// What every stage file holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePayload<I, T> {
    pub inputs: I,
    pub output: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub manifest_digest: String,
    pub cleanup: CleanupPolicy,
    pub triage_x: f64,
    pub cluster: SelectOptions,
    pub normalize: bool,
    pub labeler: String,
    pub alignment_embedder: String,
    pub sentence_embedder: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsInputs {
    pub manifest_digest: String,
    pub backend_id: String,
    pub prompt: String,
    pub params: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub sample_id: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsOutput {
    /// False when a backend failure interrupted the stage; the next run only
    /// asks for the missing samples.
    pub complete: bool,
    pub responses: Vec<LabelResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatesInputs {
    pub labels: String,
    pub policy: CleanupPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCandidates {
    pub sample_id: String,
    pub candidates: Vec<CandidateLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresInputs {
    pub candidates: String,
    pub backend_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageInputs {
    pub scores: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingsInputs {
    pub triage: String,
    pub backend_id: String,
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersInputs {
    pub embeddings: String,
    pub options: SelectOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleAssignment {
    pub sample_id: String,
    pub label: String,
    pub cluster_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersOutput {
    pub solution: ClusterSolution,
    pub samples: Vec<SampleAssignment>,
    pub labels_in_multiple_clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositesInputs {
    pub clusters: String,
    pub backend_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportInputs {
    pub scores: String,
    pub triage: String,
    pub clusters: String,
    pub composites: String,
    pub x: f64,
}

pub type LabelsStage = StagePayload<LabelsInputs, LabelsOutput>;
pub type CandidatesStage = StagePayload<CandidatesInputs, Vec<SampleCandidates>>;
pub type ScoresStage = StagePayload<ScoresInputs, Vec<Annotation>>;
pub type TriageStage = StagePayload<TriageInputs, TriageState>;
pub type EmbeddingsStage = StagePayload<EmbeddingsInputs, LabelUniverse>;
pub type ClustersStage = StagePayload<ClustersInputs, ClustersOutput>;
pub type CompositesStage = StagePayload<CompositesInputs, Vec<CompositeLabel>>;
pub type ReportStage = StagePayload<ReportInputs, Report>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageOutcome {
    pub stage: String,
    pub version: u64,
    pub digest: String,
    /// False when the stored head already matched.
    pub computed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub stages: Vec<StageOutcome>,
    /// Set when the run stopped for human review.
    pub paused_for_review: Option<usize>,
    pub backend_calls: u64,
}

/// Reads a manifest, returning it with the digest of the raw file bytes.
/// Relative local audio paths are resolved against the manifest's directory.
pub fn load_run_manifest(path: &Path) -> Result<(DatasetManifest, String)> {
    let bytes = std::fs::read(path).map_err(|source| crate::manifest::ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let digest = digest_bytes(&bytes);
    let manifest = read_manifest(&bytes[..])?;
    let base = path.parent().unwrap_or(Path::new("."));
    let samples = manifest
        .samples()
        .iter()
        .cloned()
        .map(|mut s| {
            let is_relative_file = !s.audio_uri.starts_with("file://")
                && local_audio_path(&s.audio_uri).is_some_and(|p| p.is_relative());
            if is_relative_file {
                s.audio_uri = base.join(&s.audio_uri).to_string_lossy().into_owned();
            }
            s
        })
        .collect();
    let manifest = DatasetManifest::new(samples).map_err(crate::manifest::ManifestError::from)?;
    Ok((manifest, digest))
}

pub struct Pipeline {
    config: RunConfig,
    store: RunStore,
    manifest: DatasetManifest,
    manifest_digest: String,
    labeler: Gateway,
    aligner: Gateway,
    sentence: Gateway,
    pool: rayon::ThreadPool,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("store", &self.store.root())
            .field("samples", &self.manifest.len())
            .finish()
    }
}

/// Loads a stage's head when it exists; schema mismatches count as absent.
fn load_head<P: DeserializeOwned>(store: &RunStore, stage: &str) -> Result<Option<(P, String)>> {
    match store.load_stage_with_digest::<P>(stage) {
        Ok(v) => Ok(Some(v)),
        Err(StoreError::MissingStage(_)) | Err(StoreError::Payload { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

impl Pipeline {
    pub fn open(config: RunConfig) -> Result<Self> {
        let (manifest, manifest_digest) = load_run_manifest(&config.manifest_path())?;
        let store = RunStore::open(config.store_path())?;
        let cache = store.cache_dir();
        let connect = |role: Role| Gateway::connect(config.backend(role).clone(), &config.base_dir, Some(&cache));
        let labeler = connect(Role::Labeler)?;
        let aligner = connect(Role::AlignmentEmbedder)?;
        let sentence = connect(Role::SentenceEmbedder)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
        Ok(Self {
            config,
            store,
            manifest,
            manifest_digest,
            labeler,
            aligner,
            sentence,
            pool,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn aligner(&self) -> &Gateway {
        &self.aligner
    }

    pub fn labeler(&self) -> &Gateway {
        &self.labeler
    }

    pub fn backend_calls(&self) -> u64 {
        self.labeler.calls() + self.aligner.calls() + self.sentence.calls()
    }

    /// Loads a predecessor stage, naming it in the error when absent.
    pub fn require<P: DeserializeOwned>(&self, stage: &str, needed_by: &str) -> Result<(P, String)> {
        match self.store.load_stage_with_digest::<P>(stage) {
            Ok(v) => Ok(v),
            Err(StoreError::MissingStage(_)) => Err(Error::MissingPredecessor {
                stage: needed_by.to_string(),
                missing: stage.to_string(),
            }),
            Err(e) => Err(e.into()),
        }
    }

    fn persist<I: Serialize, T: Serialize>(&self, stage: &str, payload: &StagePayload<I, T>, computed: bool) -> Result<StageOutcome> {
        let p = self.store.persist_stage(stage, payload)?;
        Ok(StageOutcome {
            stage: stage.to_string(),
            version: p.version,
            digest: p.digest,
            computed: computed && p.written,
        })
    }

    fn reuse(stage: &str, store: &RunStore, digest: String) -> Result<StageOutcome> {
        let version = store.head(stage)?.map_or(0, |h| h.version);
        Ok(StageOutcome {
            stage: stage.to_string(),
            version,
            digest,
            computed: false,
        })
    }

    pub fn snapshot_config(&self) -> Result<StageOutcome> {
        let snap = ConfigSnapshot {
            manifest_digest: self.manifest_digest.clone(),
            cleanup: self.config.cleanup.policy(),
            triage_x: self.config.triage.x,
            cluster: self.config.cluster.select_options(),
            normalize: self.config.cluster.normalize,
            labeler: self.labeler.backend_id().to_string(),
            alignment_embedder: self.aligner.backend_id().to_string(),
            sentence_embedder: self.sentence.backend_id().to_string(),
        };
        let p = self.store.persist_stage(stages::CONFIG, &snap)?;
        Ok(StageOutcome {
            stage: stages::CONFIG.into(),
            version: p.version,
            digest: p.digest,
            computed: p.written,
        })
    }

    pub fn run_labels(&self) -> Result<StageOutcome> {
        let inputs = LabelsInputs {
            manifest_digest: self.manifest_digest.clone(),
            backend_id: self.labeler.backend_id().to_string(),
            prompt: initial_prompt().to_string(),
            params: self.labeler.descriptor().params.clone(),
        };
        let mut known: Vec<Option<String>> = vec![None; self.manifest.len()];
        if let Some((head, digest)) = load_head::<LabelsStage>(&self.store, stages::LABELS)? {
            if head.inputs == inputs {
                if head.output.complete {
                    return Self::reuse(stages::LABELS, &self.store, digest);
                }
                let by_id: std::collections::HashMap<_, _> = head
                    .output
                    .responses
                    .into_iter()
                    .map(|r| (r.sample_id, r.response))
                    .collect();
                for (slot, s) in known.iter_mut().zip(self.manifest.iter()) {
                    *slot = by_id.get(&s.sample_id).cloned();
                }
            }
        }
        let results: Vec<Result<String, GatewayError>> = self.pool.install(|| {
            self.manifest
                .samples()
                .par_iter()
                .zip(known.par_iter())
                .map(|(s, k)| match k {
                    Some(r) => Ok(r.clone()),
                    None => self.labeler.generate_labels(s, &inputs.prompt),
                })
                .collect()
        });
        let mut responses = Vec::with_capacity(results.len());
        let mut first_error = None;
        for (s, r) in self.manifest.iter().zip(results) {
            match r {
                Ok(response) => responses.push(LabelResponse {
                    sample_id: s.sample_id.clone(),
                    response,
                }),
                Err(e) if first_error.is_none() => first_error = Some(e),
                Err(_) => {}
            }
        }
        let complete = first_error.is_none();
        let outcome = self.persist(stages::LABELS, &StagePayload { inputs, output: LabelsOutput { complete, responses } }, true)?;
        match first_error {
            Some(e) => Err(e.into()),
            None => Ok(outcome),
        }
    }

    pub fn run_candidates(&self) -> Result<StageOutcome> {
        let (labels, labels_digest): (LabelsStage, String) = self.require(stages::LABELS, stages::CANDIDATES)?;
        if !labels.output.complete {
            return Err(Error::MissingPredecessor {
                stage: stages::CANDIDATES.into(),
                missing: format!("{} (incomplete)", stages::LABELS),
            });
        }
        let inputs = CandidatesInputs {
            labels: labels_digest,
            policy: self.config.cleanup.policy(),
        };
        if let Some((head, digest)) = load_head::<CandidatesStage>(&self.store, stages::CANDIDATES)? {
            if head.inputs == inputs {
                return Self::reuse(stages::CANDIDATES, &self.store, digest);
            }
        }
        let source = LabelSource::Mllm(labels.inputs.backend_id.clone());
        let output: Vec<SampleCandidates> = labels
            .output
            .responses
            .iter()
            .map(|r| SampleCandidates {
                sample_id: r.sample_id.clone(),
                candidates: split_labels(&r.response)
                    .into_iter()
                    .map(|raw| {
                        let cleaned = clean_label(&raw, &inputs.policy);
                        CandidateLabel::from_cleanup(raw, cleaned, source.clone())
                    })
                    .collect(),
            })
            .collect();
        self.persist(stages::CANDIDATES, &StagePayload { inputs, output }, true)
    }

    pub fn run_scores(&self) -> Result<StageOutcome> {
        let (cands, cands_digest): (CandidatesStage, String) = self.require(stages::CANDIDATES, stages::SCORES)?;
        let inputs = ScoresInputs {
            candidates: cands_digest,
            backend_id: self.aligner.backend_id().to_string(),
        };
        if let Some((head, digest)) = load_head::<ScoresStage>(&self.store, stages::SCORES)? {
            if head.inputs == inputs {
                return Self::reuse(stages::SCORES, &self.store, digest);
            }
        }
        let annotations: Vec<Result<Annotation>> = self.pool.install(|| {
            cands
                .output
                .into_par_iter()
                .map(|sc| {
                    let sample = self
                        .manifest
                        .get(&sc.sample_id)
                        .ok_or_else(|| Error::Validation(format!("sample {:?} is not in the manifest", sc.sample_id)))?;
                    let audio = self.aligner.embed_audio(sample)?;
                    let mut candidates = sc.candidates;
                    for c in candidates.iter_mut() {
                        if let Some(text) = c.cleaned_text.as_deref() {
                            let t = self.aligner.embed_text(text)?;
                            c.clap_score = Some(clap_score(&audio, &t)?);
                        }
                    }
                    Ok(retain_best(sc.sample_id, candidates))
                })
                .collect()
        });
        let output = annotations.into_iter().collect::<Result<Vec<_>>>()?;
        self.persist(stages::SCORES, &StagePayload { inputs, output }, true)
    }

    /// Creates the review state from the scores, or keeps the existing one
    /// when it was built from the same scores.
    pub fn init_triage(&self) -> Result<StageOutcome> {
        let (scores, scores_digest): (ScoresStage, String) = self.require(stages::SCORES, stages::TRIAGE)?;
        let inputs = TriageInputs { scores: scores_digest };
        if let Some((head, digest)) = load_head::<TriageStage>(&self.store, stages::TRIAGE)? {
            if head.inputs == inputs {
                return Self::reuse(stages::TRIAGE, &self.store, digest);
            }
        }
        build_queue(&scores.output, &self.manifest, self.config.triage.x)?;
        self.persist(
            stages::TRIAGE,
            &StagePayload {
                inputs,
                output: TriageState::new(scores.output),
            },
            true,
        )
    }

    /// Loads the review state as a session over this run's manifest.
    pub fn triage_session(&self) -> Result<(TriageSession, TriageInputs)> {
        let (t, _): (TriageStage, String) = self.require(stages::TRIAGE, "triage serve")?;
        Ok((TriageSession::new(self.manifest.clone(), t.output)?, t.inputs))
    }

    /// Writes updated review state as a new triage version.
    pub fn save_triage(&self, inputs: &TriageInputs, state: &TriageState) -> Result<StageOutcome> {
        let payload = StagePayload {
            inputs: inputs.clone(),
            output: state,
        };
        self.persist(stages::TRIAGE, &payload, true)
    }

    /// Applies `(sample_id, text)` relabels at the configured x through the
    /// same path as the review server. Relabels accepted before a failure
    /// are kept.
    pub fn apply_relabels<'a>(
        &self,
        relabels: impl IntoIterator<Item = (&'a str, &'a str)>,
        timestamp_ms: u64,
    ) -> Result<Vec<RelabelEvent>> {
        self.init_triage()?;
        let (mut session, inputs) = self.triage_session()?;
        let x = self.config.triage.x;
        let mut events = Vec::new();
        let mut failure = None;
        for (id, text) in relabels {
            match session.submit_relabel(id, text, x, &self.aligner, timestamp_ms) {
                Ok((ev, _)) => events.push(ev),
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        self.save_triage(&inputs, session.state())?;
        match failure {
            Some(e) => Err(e.into()),
            None => Ok(events),
        }
    }

    /// Queue entries at the configured x still waiting for a decision.
    pub fn pending_reviews(&self) -> Result<usize> {
        let (session, _) = self.triage_session()?;
        Ok(session
            .queue(self.config.triage.x)?
            .iter()
            .filter(|e| e.status == QueueStatus::Pending)
            .count())
    }

    pub fn run_embeddings(&self) -> Result<StageOutcome> {
        let (triage, triage_digest): (TriageStage, String) = self.require(stages::TRIAGE, stages::EMBEDDINGS)?;
        let inputs = EmbeddingsInputs {
            triage: triage_digest,
            backend_id: self.sentence.backend_id().to_string(),
            normalize: self.config.cluster.normalize,
        };
        if let Some((head, digest)) = load_head::<EmbeddingsStage>(&self.store, stages::EMBEDDINGS)? {
            if head.inputs == inputs {
                return Self::reuse(stages::EMBEDDINGS, &self.store, digest);
            }
        }
        let universe = self
            .pool
            .install(|| build_universe(&triage.output.current, &self.sentence, inputs.normalize))?;
        self.persist(stages::EMBEDDINGS, &StagePayload { inputs, output: universe }, true)
    }

    pub fn run_clusters(&self) -> Result<StageOutcome> {
        let (emb, emb_digest): (EmbeddingsStage, String) = self.require(stages::EMBEDDINGS, stages::CLUSTERS)?;
        let inputs = ClustersInputs {
            embeddings: emb_digest,
            options: self.config.cluster.select_options(),
        };
        if let Some((head, digest)) = load_head::<ClustersStage>(&self.store, stages::CLUSTERS)? {
            if head.inputs == inputs {
                return Self::reuse(stages::CLUSTERS, &self.store, digest);
            }
        }
        let universe = emb.output;
        let solution = self.pool.install(|| solve(&universe, &inputs.options))?;
        let output = cluster_output(&universe, solution);
        self.persist(stages::CLUSTERS, &StagePayload { inputs, output }, true)
    }

    pub fn run_composites(&self) -> Result<StageOutcome> {
        let (clusters, clusters_digest): (ClustersStage, String) = self.require(stages::CLUSTERS, stages::COMPOSITES)?;
        let inputs = CompositesInputs {
            clusters: clusters_digest,
            backend_id: self.labeler.backend_id().to_string(),
        };
        if let Some((head, digest)) = load_head::<CompositesStage>(&self.store, stages::COMPOSITES)? {
            if head.inputs == inputs {
                return Self::reuse(stages::COMPOSITES, &self.store, digest);
            }
        }
        let dists = distributions(&clusters.output)?;
        let labels: Vec<Result<CompositeLabel>> = self.pool.install(|| {
            dists
                .par_iter()
                .map(|d| Ok(compose_cluster_label(d, &self.labeler)?))
                .collect()
        });
        let output = labels.into_iter().collect::<Result<Vec<_>>>()?;
        self.persist(stages::COMPOSITES, &StagePayload { inputs, output }, true)
    }

    pub fn run_report(&self) -> Result<StageOutcome> {
        let (scores, scores_digest): (ScoresStage, String) = self.require(stages::SCORES, stages::REPORT)?;
        let (triage, triage_digest): (TriageStage, String) = self.require(stages::TRIAGE, stages::REPORT)?;
        let (clusters, clusters_digest): (ClustersStage, String) = self.require(stages::CLUSTERS, stages::REPORT)?;
        let (composites, composites_digest): (CompositesStage, String) =
            self.require(stages::COMPOSITES, stages::REPORT)?;
        let inputs = ReportInputs {
            scores: scores_digest,
            triage: triage_digest,
            clusters: clusters_digest,
            composites: composites_digest,
            x: self.config.triage.x,
        };
        if let Some((head, digest)) = load_head::<ReportStage>(&self.store, stages::REPORT)? {
            if head.inputs == inputs {
                return Self::reuse(stages::REPORT, &self.store, digest);
            }
        }
        let report = build_report(
            self.manifest.dataset_id(),
            self.labeler.backend_id(),
            &scores.output,
            &triage.output,
            &clusters.output,
            &composites.output,
            inputs.x,
        )?;
        self.persist(stages::REPORT, &StagePayload { inputs, output: report }, true)
    }

    pub fn load_report(&self) -> Result<Report> {
        let (r, _): (ReportStage, String) = self.require(stages::REPORT, "render")?;
        Ok(r.output)
    }

    /// Runs every stage in order. Stops after review initialisation when
    /// review is enabled, entries are pending and `resume` is false.
    pub fn run(&self, resume: bool) -> Result<RunSummary> {
        let mut out = vec![self.snapshot_config()?];
        out.push(self.run_labels()?);
        out.push(self.run_candidates()?);
        out.push(self.run_scores()?);
        out.push(self.init_triage()?);
        if self.config.triage.pause && !resume {
            let pending = self.pending_reviews()?;
            if pending > 0 {
                return Ok(RunSummary {
                    stages: out,
                    paused_for_review: Some(pending),
                    backend_calls: self.backend_calls(),
                });
            }
        }
        out.push(self.run_embeddings()?);
        out.push(self.run_clusters()?);
        out.push(self.run_composites()?);
        out.push(self.run_report()?);
        Ok(RunSummary {
            stages: out,
            paused_for_review: None,
            backend_calls: self.backend_calls(),
        })
    }
}

/// Expands a unique-label solution to per-sample assignments.
pub fn cluster_output(universe: &LabelUniverse, solution: ClusterSolution) -> ClustersOutput {
    let per_sample = universe.sample_assignment(&solution.assignment);
    let samples: Vec<SampleAssignment> = universe
        .sample_ids
        .iter()
        .zip(&universe.sample_label)
        .zip(per_sample)
        .map(|((id, &u), c)| SampleAssignment {
            sample_id: id.clone(),
            label: universe.labels[u].clone(),
            cluster_id: c,
        })
        .collect();
    let split = labels_in_multiple_clusters(samples.iter().map(|s| (s.label.as_str(), s.cluster_id)));
    ClustersOutput {
        solution,
        samples,
        labels_in_multiple_clusters: split,
    }
}

/// One distribution vector per cluster of the chosen solution, by id.
pub fn distributions(clusters: &ClustersOutput) -> Result<Vec<DistributionVector>> {
    let mut per_cluster: Vec<Vec<&str>> = vec![Vec::new(); clusters.solution.k];
    for s in &clusters.samples {
        per_cluster
            .get_mut(s.cluster_id)
            .ok_or_else(|| Error::Validation(format!("cluster id {} out of range", s.cluster_id)))?
            .push(&s.label);
    }
    per_cluster
        .into_iter()
        .enumerate()
        .map(|(id, labels)| Ok(DistributionVector::from_labels(id, labels)?))
        .collect()
}
