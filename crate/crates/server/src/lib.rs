//! HTTP API for the review queue.
//!
//! The server owns one [`TriageSession`] behind a mutex. Backend calls for
//! scoring relabels run on the blocking pool with the lock released, and
//! every accepted mutation is written back to the run store before the
//! response goes out, so a crash loses at most the request in flight.
//!
//! Routes (all JSON):
//!
//! | method | path                         |
//! |--------|------------------------------|
//! | GET    | `/api/queue?x=`              |
//! | GET    | `/api/sample/{id}`           |
//! | GET    | `/api/sample/{id}/audio`     |
//! | POST   | `/api/sample/{id}/relabel`   |
//! | POST   | `/api/sample/{id}/skip`      |
//! | GET    | `/api/impact?x=`             |
//!
//! When a token is configured every `/api` request must carry it as
//! `Authorization: Bearer <token>` or, for the audio element, `?token=`.

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Body;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tower_http::services::{ServeDir, ServeFile};

use scenetax::backend::local_audio_path;
use scenetax::config::RunConfig;
use scenetax::model::{CandidateLabel, RelabelEntry};
use scenetax::pipeline::{Pipeline, TriageInputs};
use scenetax::triage::{
    score_label, ImpactReport, Prepared, QueueStatus, RelabelEvent, ReviewQueueEntry, TriageError, TriageSession,
    TriageState,
};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Pipeline(#[from] scenetax::Error),
    #[error("token variable {0} is not set")]
    MissingToken(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("server task failed: {0}")]
    Join(#[from] tokio::task::JoinError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerOptions {
    /// Default review percentage when a request has no `x`.
    pub x: f64,
    pub blind: bool,
    pub token: Option<String>,
    pub static_dir: Option<PathBuf>,
}

impl ServerOptions {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, ServeError> {
        let token = match &cfg.triage.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ServeError::MissingToken(var.clone()))?),
            None => None,
        };
        Ok(Self {
            x: cfg.triage.x,
            blind: cfg.triage.blind,
            token,
            static_dir: cfg.static_dir(),
        })
    }
}

pub struct App {
    pipeline: Arc<Pipeline>,
    session: Mutex<TriageSession>,
    inputs: TriageInputs,
    opts: ServerOptions,
}

impl App {
    /// Initialises review state from the scores stage, failing when the
    /// run has not been scored yet.
    pub fn new(pipeline: Arc<Pipeline>, opts: ServerOptions) -> Result<Arc<Self>, ServeError> {
        pipeline.init_triage()?;
        let (session, inputs) = pipeline.triage_session()?;
        Ok(Arc::new(Self {
            pipeline,
            session: Mutex::new(session),
            inputs,
            opts,
        }))
    }

    fn lock(&self) -> MutexGuard<'_, TriageSession> {
        // A panic mid-request leaves the session in a consistent state:
        // every mutation is a single push or insert.
        self.session.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn state(&self) -> TriageState {
        self.lock().state().clone()
    }

    pub fn persist(&self) -> Result<(), ServeError> {
        let state = self.state();
        self.pipeline.save_triage(&self.inputs, &state)?;
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<&'static str>,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            error,
            message: message.into(),
            reason: None,
        }
    }
}

impl From<TriageError> for ApiError {
    fn from(e: TriageError) -> Self {
        let message = e.to_string();
        match e {
            TriageError::UnknownSample(_) => Self::new(StatusCode::NOT_FOUND, "unknown_sample", message),
            TriageError::NotInQueue { .. } => Self::new(StatusCode::CONFLICT, "not_in_queue", message),
            TriageError::AlreadyRelabeled(_) => Self::new(StatusCode::CONFLICT, "already_relabeled", message),
            TriageError::Rejected(r) => Self {
                reason: Some(r.as_str()),
                ..Self::new(StatusCode::UNPROCESSABLE_ENTITY, "label_rejected", message)
            },
            TriageError::Backend(_) => Self::new(StatusCode::BAD_GATEWAY, "backend", message),
            TriageError::Alignment(_) | TriageError::Mismatch(_) => {
                Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
            }
            TriageError::NoScores | TriageError::Inconsistent(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
            }
        }
    }
}

impl From<ServeError> for ApiError {
    fn from(e: ServeError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Deserialize)]
struct XQuery {
    x: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct RelabelBody {
    text: String,
}

/// Queue entry as sent to the browser: no file paths, and no machine label
/// in blind mode until the reviewer has answered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub sample_id: String,
    pub rank: usize,
    pub status: QueueStatus,
    pub current_label: Option<String>,
    pub current_score: f64,
    pub baseline_score: f64,
    pub audio_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueResponse {
    pub x: f64,
    pub entries: Vec<QueueItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub sample_id: String,
    pub dataset_id: String,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub audio_url: String,
    pub status: QueueStatus,
    pub baseline_score: f64,
    pub current_score: f64,
    pub current_label: Option<String>,
    /// `None` in blind mode until the sample is relabeled.
    pub candidates: Option<Vec<CandidateLabel>>,
    pub relabel_history: Vec<RelabelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelResponse {
    pub event: RelabelEvent,
    pub entry: QueueItem,
}

fn audio_url(sample_id: &str) -> String {
    let mut out = String::from("/api/sample/");
    for b in sample_id.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out.push_str("/audio");
    out
}

fn hidden(blind: bool, status: QueueStatus) -> bool {
    blind && status != QueueStatus::Relabeled
}

fn item(e: ReviewQueueEntry, blind: bool) -> QueueItem {
    let hide = hidden(blind, e.status);
    QueueItem {
        audio_url: audio_url(&e.sample_id),
        sample_id: e.sample_id,
        rank: e.rank,
        status: e.status,
        current_label: if hide { None } else { e.current_label },
        current_score: e.current_score,
        baseline_score: e.baseline_score,
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn active_x(app: &App, q: &XQuery) -> f64 {
    q.x.unwrap_or(app.opts.x)
}

async fn queue(State(app): State<Arc<App>>, Query(q): Query<XQuery>) -> ApiResult<QueueResponse> {
    let x = active_x(&app, &q);
    let entries = app.lock().queue(x)?;
    Ok(Json(QueueResponse {
        x,
        entries: entries.into_iter().map(|e| item(e, app.opts.blind)).collect(),
    }))
}

async fn sample(State(app): State<Arc<App>>, Path(id): Path<String>) -> ApiResult<SampleResponse> {
    let v = app.lock().sample(&id)?;
    let hide = hidden(app.opts.blind, v.status);
    Ok(Json(SampleResponse {
        audio_url: audio_url(&v.sample.sample_id),
        sample_id: v.sample.sample_id,
        dataset_id: v.sample.dataset_id,
        duration_s: v.sample.duration_s,
        sample_rate_hz: v.sample.sample_rate_hz,
        status: v.status,
        baseline_score: v.baseline_score,
        current_score: v.annotation.top_score,
        current_label: if hide {
            None
        } else {
            v.annotation.retained_label().map(str::to_string)
        },
        candidates: (!hide).then_some(v.annotation.candidates),
        relabel_history: v.annotation.relabel_history,
    }))
}

async fn audio(State(app): State<Arc<App>>, Path(id): Path<String>, req: Request) -> Result<Response, ApiError> {
    let uri = app.lock().sample(&id)?.sample.audio_uri;
    let path = local_audio_path(&uri)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "remote_audio", "audio is not stored locally"))?;
    let res = ServeFile::new(path)
        .try_call(req)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    Ok(res.map(Body::new))
}

async fn relabel(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    Query(q): Query<XQuery>,
    Json(body): Json<RelabelBody>,
) -> ApiResult<RelabelResponse> {
    let x = active_x(&app, &q);
    let app2 = app.clone();
    let out = tokio::task::spawn_blocking(move || -> Result<RelabelResponse, ApiError> {
        let prepared = app2.lock().prepare_relabel(&id, &body.text, x)?;
        let event = match prepared {
            Prepared::Unchanged(ev) => ev,
            Prepared::Score(pending) => {
                let score = score_label(app2.pipeline.aligner(), &pending.sample, &pending.cleaned)?;
                let mut session = app2.lock();
                let ev = session.apply_relabel(pending, score, now_ms())?;
                app2.pipeline.save_triage(&app2.inputs, session.state()).map_err(ServeError::from)?;
                ev
            }
        };
        let entry = app2
            .lock()
            .queue(x)?
            .into_iter()
            .find(|e| e.sample_id == id)
            .ok_or_else(|| TriageError::NotInQueue { sample_id: id.clone(), x })?;
        Ok(RelabelResponse {
            event,
            entry: item(entry, app2.opts.blind),
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(out))
}

async fn skip(State(app): State<Arc<App>>, Path(id): Path<String>, Query(q): Query<XQuery>) -> ApiResult<QueueItem> {
    let x = active_x(&app, &q);
    let app2 = app.clone();
    tokio::task::spawn_blocking(move || -> ApiResult<QueueItem> {
        let mut session = app2.lock();
        let entry = session.skip(&id, x)?;
        app2.pipeline.save_triage(&app2.inputs, session.state()).map_err(ServeError::from)?;
        Ok(Json(item(entry, app2.opts.blind)))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn impact(State(app): State<Arc<App>>, Query(q): Query<XQuery>) -> ApiResult<ImpactReport> {
    let x = active_x(&app, &q);
    Ok(Json(app.lock().impact(x)?))
}

fn token_matches(expected: &str, given: &str) -> bool {
    let (a, b) = (expected.as_bytes(), given.as_bytes());
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn query_token(req: &Request) -> Option<&str> {
    req.uri()
        .query()?
        .split('&')
        .find_map(|kv| kv.strip_prefix("token="))
}

async fn require_token(State(app): State<Arc<App>>, req: Request, next: Next) -> Response {
    let Some(expected) = app.opts.token.as_deref() else {
        return next.run(req).await;
    };
    let header_token = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    let ok = header_token.or_else(|| query_token(&req)).is_some_and(|t| token_matches(expected, t));
    if ok {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong token").into_response()
    }
}

pub fn router(app: Arc<App>) -> Router {
    let api = Router::new()
        .route("/queue", get(queue))
        .route("/sample/{id}", get(sample))
        .route("/sample/{id}/audio", get(audio))
        .route("/sample/{id}/relabel", post(relabel))
        .route("/sample/{id}/skip", post(skip))
        .route("/impact", get(impact))
        .route_layer(middleware::from_fn_with_state(app.clone(), require_token));
    let router = Router::new().nest("/api", api);
    let router = match &app.opts.static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    };
    router.with_state(app)
}

/// A running server. [`TriageServer::shutdown`] stops it and writes the
/// final review state.
pub struct TriageServer {
    addr: SocketAddr,
    app: Arc<App>,
    stop: oneshot::Sender<()>,
    task: JoinHandle<std::io::Result<()>>,
}

impl TriageServer {
    pub async fn bind(app: Arc<App>, addr: &str) -> Result<Self, ServeError> {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| ServeError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        let local = listener.local_addr()?;
        let (stop, rx) = oneshot::channel::<()>();
        let service = router(app.clone());
        let task = tokio::spawn(async move {
            axum::serve(listener, service)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        });
        Ok(Self {
            addr: local,
            app,
            stop,
            task,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn app(&self) -> &Arc<App> {
        &self.app
    }

    /// Stops accepting requests, waits for in-flight ones and writes the
    /// final state.
    pub async fn shutdown(self) -> Result<TriageState, ServeError> {
        let _ = self.stop.send(());
        self.task.await??;
        let app = self.app.clone();
        tokio::task::spawn_blocking(move || app.persist()).await??;
        Ok(self.app.state())
    }

    /// Serves until `signal` resolves, then shuts down.
    pub async fn run_until(self, signal: impl Future<Output = ()>) -> Result<TriageState, ServeError> {
        signal.await;
        self.shutdown().await
    }
}
