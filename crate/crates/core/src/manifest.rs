//! Line-oriented manifest ingestion.
//!
//! Each non-blank line is one JSON object with the keys `sample_id`,
//! `audio_uri`, `duration_s`, `sample_rate_hz` and `dataset_id`. Lines are
//! parsed one at a time so large corpora can be streamed.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use crate::model::{DatasetManifest, ManifestInvariant, SampleRecord};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("manifest line {line}: duplicate sample_id {sample_id:?}")]
    DuplicateId { line: usize, sample_id: String },
    #[error(transparent)]
    Invariant(#[from] ManifestInvariant),
}

/// Parses and validates a single manifest line. `line_no` is 1-based and
/// only used for error messages.
pub fn parse_manifest_line(line: &str, line_no: usize) -> Result<SampleRecord, ManifestError> {
    let record: SampleRecord =
        serde_json::from_str(line).map_err(|e| ManifestError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
    record.validate().map_err(|message| ManifestError::Malformed {
        line: line_no,
        message,
    })?;
    Ok(record)
}

/// Streaming reader over manifest records. Duplicate ids are caught as they
/// stream past.
pub struct ManifestReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    seen: HashSet<String>,
}

impl<R: BufRead> ManifestReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            seen: HashSet::new(),
        }
    }
}

impl<R: BufRead> Iterator for ManifestReader<R> {
    type Item = Result<SampleRecord, ManifestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    return Some(Err(ManifestError::Malformed {
                        line: self.line_no,
                        message: e.to_string(),
                    }))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let record = match parse_manifest_line(&line, self.line_no) {
                Ok(r) => r,
                Err(e) => return Some(Err(e)),
            };
            if !self.seen.insert(record.sample_id.clone()) {
                return Some(Err(ManifestError::DuplicateId {
                    line: self.line_no,
                    sample_id: record.sample_id,
                }));
            }
            return Some(Ok(record));
        }
    }
}

/// Reads a manifest from any buffered source.
pub fn read_manifest<R: BufRead>(reader: R) -> Result<DatasetManifest, ManifestError> {
    let samples = ManifestReader::new(reader).collect::<Result<Vec<_>, _>>()?;
    Ok(DatasetManifest::new(samples)?)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, ManifestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_manifest(BufReader::new(file))
}

/// Renders a manifest back into its line format.
pub fn write_manifest(manifest: &DatasetManifest) -> String {
    let mut out = String::new();
    for s in manifest {
        out.push_str(&serde_json::to_string(s).expect("sample record serializes"));
        out.push('\n');
    }
    out
}
