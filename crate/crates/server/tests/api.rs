use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use scenetax::config::RunConfig;
use scenetax::pipeline::{stages, Pipeline, TriageStage};
use scenetax::synth;
use scenetax::triage::QueueStatus;
use scenetax_server::{router, App, QueueResponse, RelabelResponse, SampleResponse, ServeError, ServerOptions, TriageServer};

const WEAK: &str = "clip-09";

struct Fixture {
    dir: tempfile::TempDir,
    pipeline: Arc<Pipeline>,
}

fn scored_run(overrides: &[&str]) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    synth::generate(synth::DEFAULT_SEED).write_to(dir.path()).unwrap();
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    let cfg = RunConfig::load(&dir.path().join("run.toml"), &overrides).unwrap();
    let pipeline = Pipeline::open(cfg).unwrap();
    let summary = pipeline.run(false).unwrap();
    assert!(summary.paused_for_review.is_some());
    Fixture {
        dir,
        pipeline: Arc::new(pipeline),
    }
}

fn options(fx: &Fixture) -> ServerOptions {
    ServerOptions {
        x: fx.pipeline.config().triage.x,
        blind: false,
        token: None,
        static_dir: None,
    }
}

fn app(fx: &Fixture, opts: ServerOptions) -> axum::Router {
    router(App::new(fx.pipeline.clone(), opts).unwrap())
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>, axum::http::HeaderMap) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body, headers)
}

async fn get_json(app: &axum::Router, uri: &str) -> (StatusCode, Value) {
    let (s, b, _) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn post_json(app: &axum::Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (s, b, _) = call(app, req).await;
    (s, serde_json::from_slice(&b).unwrap())
}

#[tokio::test]
async fn queue_lists_weakest_sample_without_paths() {
    let fx = scored_run(&[]);
    let app = app(&fx, options(&fx));
    let (s, v) = get_json(&app, "/api/queue").await;
    assert_eq!(s, StatusCode::OK);
    let q: QueueResponse = serde_json::from_value(v.clone()).unwrap();
    assert_eq!(q.x, 1.0);
    assert_eq!(q.entries.len(), 1);
    assert_eq!(q.entries[0].sample_id, WEAK);
    assert_eq!(q.entries[0].rank, 1);
    assert_eq!(q.entries[0].status, QueueStatus::Pending);
    assert_eq!(q.entries[0].audio_url, "/api/sample/clip-09/audio");
    let dir = fx.dir.path().to_string_lossy().into_owned();
    assert!(!v.to_string().contains(&dir), "file path leaked: {v}");
}

#[tokio::test]
async fn queue_is_ordered_by_baseline_score() {
    let fx = scored_run(&[]);
    let app = app(&fx, options(&fx));
    let (_, v) = get_json(&app, "/api/queue?x=25").await;
    let q: QueueResponse = serde_json::from_value(v).unwrap();
    assert_eq!(q.entries.len(), 15);
    assert_eq!(q.entries[0].sample_id, WEAK);
    for w in q.entries.windows(2) {
        assert!(w[0].baseline_score <= w[1].baseline_score);
        assert_eq!(w[0].rank + 1, w[1].rank);
    }
}

#[tokio::test]
async fn bad_x_is_a_client_error() {
    let fx = scored_run(&[]);
    let app = app(&fx, options(&fx));
    let (s, v) = get_json(&app, "/api/queue?x=0").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "bad_request");
    let (s, _) = get_json(&app, "/api/impact?x=101").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn sample_view_and_unknown_sample() {
    let fx = scored_run(&[]);
    let app = app(&fx, options(&fx));
    let (s, v) = get_json(&app, "/api/sample/clip-09").await;
    assert_eq!(s, StatusCode::OK);
    let view: SampleResponse = serde_json::from_value(v).unwrap();
    assert_eq!(view.dataset_id, synth::DATASET_ID);
    assert_eq!(view.sample_rate_hz, synth::SAMPLE_RATE_HZ);
    assert!(view.current_label.is_some());
    assert!(!view.candidates.unwrap().is_empty());
    let (s, v) = get_json(&app, "/api/sample/nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_sample");
}

#[tokio::test]
async fn relabel_raises_cohort_score_and_persists() {
    let fx = scored_run(&[]);
    let app = app(&fx, options(&fx));
    let (_, before) = get_json(&app, "/api/impact").await;
    let (s, v) = post_json(&app, "/api/sample/clip-09/relabel", json!({"text": "Wind howling"})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let r: RelabelResponse = serde_json::from_value(v).unwrap();
    assert_eq!(r.event.human_label_cleaned, "wind howling");
    assert!((r.event.new_score - 1.0).abs() < 1e-12);
    assert_eq!(r.entry.status, QueueStatus::Relabeled);
    assert_eq!(r.entry.current_label.as_deref(), Some("wind howling"));
    assert_eq!(r.entry.baseline_score, before["mu_x_before"].as_f64().unwrap());

    let (_, after) = get_json(&app, "/api/impact").await;
    assert_eq!(after["cohort_size"], 1);
    assert!(after["mu_x_after"].as_f64().unwrap() > after["mu_x_before"].as_f64().unwrap());
    assert_eq!(after["mu_x_before"], before["mu_x_before"]);

    let t: TriageStage = fx.pipeline.store().load_stage(stages::TRIAGE).unwrap();
    assert_eq!(t.output.events.len(), 1);
    assert_eq!(t.output.status.get(WEAK), Some(&QueueStatus::Relabeled));
}

#[tokio::test]
async fn repeated_relabel_is_idempotent() {
    let fx = scored_run(&[]);
    let app = app(&fx, options(&fx));
    let (_, first) = post_json(&app, "/api/sample/clip-09/relabel", json!({"text": "Wind howling"})).await;
    let version = fx.pipeline.store().head(stages::TRIAGE).unwrap().unwrap().version;
    let calls = fx.pipeline.backend_calls();
    let (s, again) = post_json(&app, "/api/sample/clip-09/relabel", json!({"text": "  wind   HOWLING!"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(first["event"], again["event"]);
    assert_eq!(fx.pipeline.store().head(stages::TRIAGE).unwrap().unwrap().version, version);
    assert_eq!(fx.pipeline.backend_calls(), calls);
}

#[tokio::test]
async fn rejected_labels_return_422_with_reason() {
    let fx = scored_run(&[]);
    let app = app(&fx, options(&fx));
    for (text, reason) in [("  !!! ", "empty"), ("", "empty"), ("風の音", "non_english")] {
        let (s, v) = post_json(&app, "/api/sample/clip-09/relabel", json!({ "text": text })).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{text:?}");
        assert_eq!(v["error"], "label_rejected");
        assert_eq!(v["reason"], reason);
    }
    let (_, v) = get_json(&app, "/api/queue").await;
    assert_eq!(v["entries"][0]["status"], "pending");
}

#[tokio::test]
async fn relabel_outside_queue_conflicts() {
    let fx = scored_run(&[]);
    let app = app(&fx, options(&fx));
    let (s, v) = post_json(&app, "/api/sample/clip-00/relabel", json!({"text": "wind howling"})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "not_in_queue");
    let (s, _) = post_json(&app, "/api/sample/ghost/relabel", json!({"text": "wind howling"})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn backend_failure_is_502_and_leaves_state() {
    let fx = scored_run(&[]);
    let app = app(&fx, options(&fx));
    // The fixture alignment backend has no embedding for this text.
    let (s, v) = post_json(&app, "/api/sample/clip-09/relabel", json!({"text": "unheard phrase"})).await;
    assert_eq!(s, StatusCode::BAD_GATEWAY, "{v}");
    let (_, v) = get_json(&app, "/api/queue").await;
    assert_eq!(v["entries"][0]["status"], "pending");
}

#[tokio::test]
async fn malformed_body_is_rejected() {
    let fx = scored_run(&[]);
    let app = app(&fx, options(&fx));
    let req = Request::post("/api/sample/clip-09/relabel")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{\"label\": 3}"))
        .unwrap();
    let (s, _, _) = call(&app, req).await;
    assert!(s.is_client_error());
}

#[tokio::test]
async fn skip_then_relabel_then_skip() {
    let fx = scored_run(&[]);
    let app = app(&fx, options(&fx));
    let (s, v) = post_json(&app, "/api/sample/clip-09/skip", json!({})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "skipped");
    let (s, _) = post_json(&app, "/api/sample/clip-09/relabel", json!({"text": "wind howling"})).await;
    assert_eq!(s, StatusCode::OK);
    let (s, v) = post_json(&app, "/api/sample/clip-09/skip", json!({})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "already_relabeled");
}

#[tokio::test]
async fn blind_mode_hides_machine_labels_until_answered() {
    let fx = scored_run(&[]);
    let app = app(&fx, ServerOptions { blind: true, ..options(&fx) });
    let (_, v) = get_json(&app, "/api/queue").await;
    assert!(v["entries"][0]["current_label"].is_null());
    let (_, v) = get_json(&app, "/api/sample/clip-09").await;
    assert!(v["current_label"].is_null());
    assert!(v["candidates"].is_null());
    post_json(&app, "/api/sample/clip-09/relabel", json!({"text": "wind howling"})).await;
    let (_, v) = get_json(&app, "/api/queue").await;
    assert_eq!(v["entries"][0]["current_label"], "wind howling");
    let (_, v) = get_json(&app, "/api/sample/clip-09").await;
    assert!(v["candidates"].is_array());
}

#[tokio::test]
async fn token_is_required_when_configured() {
    let fx = scored_run(&[]);
    let app = app(&fx, ServerOptions { token: Some("s3cret".into()), ..options(&fx) });
    let (s, _, _) = call(&app, Request::get("/api/queue").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let req = Request::get("/api/queue")
        .header(header::AUTHORIZATION, "Bearer wrong")
        .body(Body::empty())
        .unwrap();
    assert_eq!(call(&app, req).await.0, StatusCode::UNAUTHORIZED);
    let req = Request::get("/api/queue")
        .header(header::AUTHORIZATION, "Bearer s3cret")
        .body(Body::empty())
        .unwrap();
    assert_eq!(call(&app, req).await.0, StatusCode::OK);
    let req = Request::get("/api/sample/clip-09/audio?token=s3cret").body(Body::empty()).unwrap();
    assert_eq!(call(&app, req).await.0, StatusCode::OK);
}

#[tokio::test]
async fn audio_supports_ranges() {
    let fx = scored_run(&[]);
    let app = app(&fx, options(&fx));
    let wav = std::fs::read(fx.dir.path().join("audio/clip-09.wav")).unwrap();
    let (s, body, headers) = call(&app, Request::get("/api/sample/clip-09/audio").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, wav);
    assert!(headers[header::CONTENT_TYPE].to_str().unwrap().contains("wav"));
    let req = Request::get("/api/sample/clip-09/audio")
        .header(header::RANGE, "bytes=0-11")
        .body(Body::empty())
        .unwrap();
    let (s, body, _) = call(&app, req).await;
    assert_eq!(s, StatusCode::PARTIAL_CONTENT);
    assert_eq!(body, &wav[..12]);
    assert_eq!(&body[..4], b"RIFF");
}

#[tokio::test]
async fn static_directory_is_served() {
    let fx = scored_run(&[]);
    let site = fx.dir.path().join("site");
    std::fs::create_dir_all(&site).unwrap();
    std::fs::write(site.join("index.html"), "<html>review</html>").unwrap();
    let app = app(&fx, ServerOptions { static_dir: Some(site), ..options(&fx) });
    let (s, body, _) = call(&app, Request::get("/").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, b"<html>review</html>");
}

#[tokio::test]
async fn startup_requires_scores() {
    let dir = tempfile::tempdir().unwrap();
    synth::generate(synth::DEFAULT_SEED).write_to(dir.path()).unwrap();
    let cfg = RunConfig::load(&dir.path().join("run.toml"), &[]).unwrap();
    let pipeline = Arc::new(Pipeline::open(cfg).unwrap());
    let opts = ServerOptions {
        x: 1.0,
        blind: false,
        token: None,
        static_dir: None,
    };
    let err = App::new(pipeline, opts).err().expect("must fail");
    match err {
        ServeError::Pipeline(e) => {
            assert_eq!(e.exit_code(), 4);
            assert!(e.to_string().contains(stages::SCORES), "{e}");
        }
        other => panic!("unexpected {other}"),
    }
}

#[tokio::test]
async fn missing_token_variable_fails_startup() {
    let fx = scored_run(&["triage.token_env=SCENETAX_TEST_UNSET_TOKEN"]);
    let err = ServerOptions::from_config(fx.pipeline.config()).unwrap_err();
    assert!(matches!(err, ServeError::MissingToken(_)));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bound_server_round_trip_and_shutdown() {
    let fx = scored_run(&[]);
    let app = App::new(fx.pipeline.clone(), options(&fx)).unwrap();
    let server = TriageServer::bind(app, "127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", server.local_addr());
    let client = reqwest::Client::new();

    let q: QueueResponse = client.get(format!("{base}/api/queue")).send().await.unwrap().json().await.unwrap();
    assert_eq!(q.entries[0].sample_id, WEAK);
    let res = client
        .post(format!("{base}/api/sample/{WEAK}/relabel"))
        .json(&json!({"text": "Wind howling"}))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), 200);
    let res = client
        .post(format!("{base}/api/sample/{WEAK}/relabel"))
        .json(&json!({"text": "?!"}))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), 422);

    let taken = server.local_addr().to_string();
    let again = App::new(fx.pipeline.clone(), options(&fx)).unwrap();
    assert!(matches!(TriageServer::bind(again, &taken).await, Err(ServeError::Bind { .. })));

    let state = server.shutdown().await.unwrap();
    assert_eq!(state.relabel_count(), 1);
    assert!(client.get(format!("{base}/api/queue")).send().await.is_err());

    // A fresh pipeline over the same store resumes from the saved review.
    let cfg = RunConfig::load(&fx.dir.path().join("run.toml"), &[]).unwrap();
    let reopened = Pipeline::open(cfg).unwrap();
    let (session, _) = reopened.triage_session().unwrap();
    assert_eq!(session.state(), &state);
    assert_eq!(reopened.pending_reviews().unwrap(), 0);
}
