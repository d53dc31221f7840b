//! Auditory scene label discovery and clustering.
//!
//! The pipeline asks a multimodal labeler for word-pair descriptions of every
//! clip, cleans them, scores each candidate against the clip with an
//! audio/text alignment embedder, lets a human relabel the worst-aligned
//! clips, clusters the surviving labels in a sentence-embedding space and
//! names every cluster with a composite sentence.
//!
//! Every stage writes its output to a [`store::RunStore`] so a run can be
//! resumed, audited and diffed.

pub mod alignment;
pub mod backend;
pub mod cluster;
pub mod composite;
pub mod config;
pub mod error;
pub mod export;
pub mod manifest;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod store;
pub mod synth;
pub mod text;
pub mod triage;

pub use error::{Error, ErrorKind, Result};
pub use model::{Annotation, CandidateLabel, DatasetManifest, LabelSource, SampleRecord};
