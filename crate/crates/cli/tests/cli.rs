use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scenetax"))
}

fn corpus() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("synth").arg("--out").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_check_detects_edits() {
    let dir = corpus();
    let ok = bin().args(["synth", "--check", "--out"]).arg(dir.path()).output().unwrap();
    assert!(ok.status.success());
    std::fs::write(dir.path().join("truth.tsv"), "tampered\n").unwrap();
    let bad = bin().args(["synth", "--check", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("truth.tsv"));
}

#[test]
fn review_cycle_then_noop_rerun() {
    let dir = corpus();
    let d = dir.path();

    let first = run_in(d, &["run"]);
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(stderr(&first).contains("paused: 1 sample"));

    let status = run_in(d, &["triage", "status", "--json"]);
    let v: Value = serde_json::from_slice(&status.stdout).unwrap();
    assert_eq!(v["queue"][0]["sample_id"], "clip-09");

    let apply = run_in(d, &["triage", "apply", "review.json"]);
    assert!(apply.status.success(), "{}", stderr(&apply));
    assert!(stdout(&apply).contains("wind howling"));

    let done = run_in(d, &["run", "--continue"]);
    assert!(done.status.success(), "{}", stderr(&done));
    assert!(stdout(&done).contains("Cluster count selection"));

    let report = run_in(d, &["report", "--json"]);
    let r: Value = serde_json::from_slice(&report.stdout).unwrap();
    assert_eq!(r["selection"]["k"], 4);
    assert_eq!(r["review"]["relabeled"], 1);
    assert!(r["review"]["delta"].as_f64().unwrap() > 0.0);
    assert_eq!(r["labels_in_multiple_clusters"], 0);
    assert_eq!(r["top_clusters"].as_array().unwrap().len(), 3);

    let again = run_in(d, &["run", "--continue"]);
    assert!(again.status.success());
    assert!(stderr(&again).contains("backend calls: 0"), "{}", stderr(&again));
    assert!(!stdout(&again).contains(" computed "), "{}", stdout(&again));
}

#[test]
fn stage_commands_in_order() {
    let dir = corpus();
    let d = dir.path();
    for cmd in ["label", "score", "cluster", "composite", "report"] {
        let o = run_in(d, &[cmd]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let text = stdout(&run_in(d, &["report"]));
    assert!(text.contains("Mean top alignment score"));
    assert!(text.contains("n/a"), "no relabels yet: {text}");
}

#[test]
fn exit_codes() {
    let dir = corpus();
    let d = dir.path();
    let missing = run_in(d, &["cluster"]);
    assert_eq!(missing.status.code(), Some(4), "{}", stderr(&missing));
    assert!(stderr(&missing).contains("triage"));

    let invalid = run_in(d, &["--set", "cluster.stride=0", "run"]);
    assert_eq!(invalid.status.code(), Some(2));
    let unknown_key = run_in(d, &["--set", "cluster.colour=red", "run"]);
    assert_eq!(unknown_key.status.code(), Some(2));

    let backend = run_in(d, &["--set", "backends.labeler.endpoint=http://127.0.0.1:9", "label"]);
    assert_eq!(backend.status.code(), Some(3), "{}", stderr(&backend));

    let usage = run_in(d, &["frobnicate"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn export_writes_tables() {
    let dir = corpus();
    let d = dir.path();
    assert!(run_in(d, &["--set", "triage.pause=false", "run"]).status.success());
    let o = run_in(d, &["export", "--out", "exp"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = std::fs::read_to_string(d.join("exp/assignments.tsv")).unwrap();
    assert!(a.starts_with("sample_id\tretained_label\tcluster_id\n"));
    assert_eq!(a.lines().count(), 61);
    let c = std::fs::read_to_string(d.join("exp/curve.tsv")).unwrap();
    assert!(c.starts_with("k\ts\ts_adj\n2\t"));
    assert!(d.join("exp/embeddings.tsv").exists());
    assert_eq!(std::fs::read_to_string(d.join("exp/composites.tsv")).unwrap().lines().count(), 5);
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
    }
}

fn http(addr: &str, request: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    s.write_all(request.as_bytes()).unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}

#[test]
fn serve_answers_and_saves_on_interrupt() {
    let dir = corpus();
    let d = dir.path();
    assert_eq!(run_in(d, &["score"]).status.code(), Some(4));
    assert!(run_in(d, &["label"]).status.success());
    assert!(run_in(d, &["score"]).status.success());
    let child = bin()
        .current_dir(d)
        .args(["triage", "serve", "--bind", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut server = Server(child);
    let mut lines = BufReader::new(server.0.stderr.take().unwrap()).lines();
    let banner = lines.next().unwrap().unwrap();
    let addr = banner.rsplit("http://").next().unwrap().trim().to_string();

    let q = http(&addr, "GET /api/queue HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
    assert!(q.starts_with("HTTP/1.1 200"), "{q}");
    assert!(q.contains("clip-09"));

    let body = r#"{"text":"Wind howling"}"#;
    let req = format!(
        "POST /api/sample/clip-09/relabel HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let r = http(&addr, &req);
    assert!(r.starts_with("HTTP/1.1 200"), "{r}");

    let pid = server.0.id().to_string();
    assert!(Command::new("kill").args(["-INT", &pid]).status().unwrap().success());
    let status = server.0.wait().unwrap();
    assert!(status.success());
    let rest: Vec<String> = lines.map_while(Result::ok).collect();
    assert!(rest.iter().any(|l| l.contains("1 relabeled")), "{rest:?}");

    let v: Value = serde_json::from_slice(&run_in(d, &["triage", "status", "--json"]).stdout).unwrap();
    assert_eq!(v["queue"][0]["status"], "relabeled");
}

#[test]
fn serve_refuses_unscored_run() {
    let dir = corpus();
    let o = run_in(dir.path(), &["triage", "serve", "--bind", "127.0.0.1:0"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}
