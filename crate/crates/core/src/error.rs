use crate::alignment::AlignmentError;
use crate::backend::GatewayError;
use crate::cluster::{ClusterError, UniverseError};
use crate::composite::CompositeError;
use crate::config::ConfigError;
use crate::manifest::ManifestError;
use crate::store::StoreError;
use crate::triage::TriageError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Triage(#[from] TriageError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Universe(#[from] UniverseError),
    #[error(transparent)]
    Composite(#[from] CompositeError),
    #[error("stage {stage:?} needs {missing:?}, which has not been run")]
    MissingPredecessor { stage: String, missing: String },
    #[error("{0}")]
    Validation(String),
    #[error("I/O on {}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error classes, one per process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Backend,
    MissingStage,
    Other,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Other => 1,
            ErrorKind::Validation => 2,
            ErrorKind::Backend => 3,
            ErrorKind::MissingStage => 4,
        }
    }
}

fn gateway_kind(e: &GatewayError) -> ErrorKind {
    if e.is_validation() {
        ErrorKind::Validation
    } else {
        ErrorKind::Backend
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Manifest(ManifestError::Io { .. }) => ErrorKind::Other,
            Error::Manifest(_) | Error::Config(_) | Error::Validation(_) | Error::Cluster(_) => {
                ErrorKind::Validation
            }
            Error::Alignment(_) => ErrorKind::Validation,
            Error::Store(StoreError::MissingStage(_)) | Error::MissingPredecessor { .. } => {
                ErrorKind::MissingStage
            }
            Error::Store(_) | Error::Io { .. } => ErrorKind::Other,
            Error::Backend(e) => gateway_kind(e),
            Error::Universe(UniverseError::Backend { source, .. }) => gateway_kind(source),
            Error::Universe(_) => ErrorKind::Validation,
            Error::Composite(CompositeError::Backend { source, .. }) => gateway_kind(source),
            Error::Composite(CompositeError::EmptyResponse(_)) => ErrorKind::Backend,
            Error::Composite(_) => ErrorKind::Validation,
            Error::Triage(TriageError::Backend(e)) => gateway_kind(e),
            Error::Triage(_) => ErrorKind::Validation,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind().exit_code()
    }
}
