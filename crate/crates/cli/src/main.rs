use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use scenetax::config::RunConfig;
use scenetax::export;
use scenetax::pipeline::{stages, ClustersStage, CompositesStage, EmbeddingsStage, Pipeline, StageOutcome};
use scenetax::report::{fmt4, render_text};
use scenetax::synth;
use scenetax::triage::QueueStatus;
use scenetax_server::{App, ServeError, ServerOptions, TriageServer};

#[derive(Parser)]
#[command(name = "scenetax", version, about = "Discover, review and cluster auditory scene labels")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration file.
    #[arg(short, long, global = true, default_value = "run.toml")]
    config: PathBuf,
    /// Override a configuration value, e.g. `--set cluster.lambda=0.05`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Ask the labeler for word pairs and clean them.
    Label,
    /// Score candidates against their audio and keep the best one.
    Score,
    #[command(subcommand)]
    Triage(TriageCommand),
    /// Embed retained labels and pick the cluster count.
    Cluster,
    /// Describe each cluster with one sentence.
    Composite,
    /// Print the run summary tables.
    Report {
        #[arg(long)]
        json: bool,
    },
    /// Run every stage; stops for review unless `--continue` is given.
    Run {
        #[arg(long = "continue")]
        resume: bool,
    },
    /// Write tab-separated assignments, curve, embeddings and composites.
    Export {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the synthetic demo corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = synth::DEFAULT_SEED)]
        seed: u64,
        /// Compare with the files in `--out` instead of writing.
        #[arg(long)]
        check: bool,
    },
}

#[derive(Subcommand)]
enum TriageCommand {
    /// Serve the review API and, when configured, the review UI.
    Serve {
        /// Listen address; defaults to `triage.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Print the queue and the before/after figures.
    Status {
        #[arg(long)]
        json: bool,
    },
    /// Apply relabels from a JSON array of `{sample_id, text}` objects.
    Apply { file: PathBuf },
}

#[derive(Deserialize)]
struct Relabel {
    sample_id: String,
    text: String,
}

/// Error carrying its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<scenetax::Error> for Failure {
    fn from(e: scenetax::Error) -> Self {
        Self {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

impl From<ServeError> for Failure {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::Pipeline(e) => e.into(),
            ServeError::MissingToken(_) => Self::validation(e.to_string()),
            other => Self::other(other.to_string()),
        }
    }
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn other(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

type CliResult = Result<(), Failure>;

fn open(g: &Global) -> Result<Pipeline, Failure> {
    let cfg = RunConfig::load(&g.config, &g.overrides).map_err(scenetax::Error::from)?;
    Ok(Pipeline::open(cfg)?)
}

fn print_outcomes(outcomes: &[StageOutcome]) {
    for o in outcomes {
        let what = if o.computed { "computed" } else { "up to date" };
        println!("{:<11} v{:<4} {:<10} {}", o.stage, o.version, what, o.digest);
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize")
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::other(format!("cannot create {}: {e}", path.display())))
}

fn write_failed(e: impl std::fmt::Display) -> Failure {
    Failure::other(e.to_string())
}

fn run_stages(p: &Pipeline, steps: &[fn(&Pipeline) -> scenetax::Result<StageOutcome>]) -> CliResult {
    let mut out = vec![p.snapshot_config()?];
    for step in steps {
        out.push(step(p)?);
    }
    print_outcomes(&out);
    Ok(())
}

fn serve(g: &Global, bind: Option<String>) -> CliResult {
    let pipeline = Arc::new(open(g)?);
    pipeline.snapshot_config()?;
    let opts = ServerOptions::from_config(pipeline.config())?;
    let addr = bind.unwrap_or_else(|| pipeline.config().triage.bind.clone());
    let app = App::new(pipeline.clone(), opts)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::other(e.to_string()))?;
    let result = rt.block_on(async {
        let server = TriageServer::bind(app, &addr).await?;
        eprintln!("review server listening on http://{}", server.local_addr());
        server
            .run_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    });
    // Blocking HTTP clients inside the pipeline must not be dropped on a
    // runtime thread.
    drop(rt);
    let state = result?;
    eprintln!("saved review state: {} relabeled", state.relabel_count());
    drop(pipeline);
    Ok(())
}

fn triage_status(g: &Global, json: bool) -> CliResult {
    let p = open(g)?;
    p.snapshot_config()?;
    p.init_triage()?;
    let (session, _) = p.triage_session()?;
    let x = p.config().triage.x;
    let queue = session.queue(x).map_err(scenetax::Error::from)?;
    let impact = session.impact(x).map_err(scenetax::Error::from)?;
    if json {
        println!("{}", to_json(&serde_json::json!({ "queue": queue, "impact": impact })));
        return Ok(());
    }
    println!("{:<5} {:<24} {:>8} {:>8}  {:<10} label", "rank", "sample", "baseline", "current", "status");
    for e in &queue {
        let status = match e.status {
            QueueStatus::Pending => "pending",
            QueueStatus::Relabeled => "relabeled",
            QueueStatus::Skipped => "skipped",
        };
        println!(
            "{:<5} {:<24} {:>8} {:>8}  {:<10} {}",
            e.rank,
            e.sample_id,
            fmt4(e.baseline_score),
            fmt4(e.current_score),
            status,
            e.current_label.as_deref().unwrap_or("-")
        );
    }
    println!(
        "cohort {}  mu_x before {}  after {}  delta {}",
        impact.cohort_size,
        fmt4(impact.mu_x_before),
        fmt4(impact.mu_x_after),
        fmt4(impact.delta)
    );
    Ok(())
}

fn triage_apply(g: &Global, file: &Path) -> CliResult {
    let text = std::fs::read_to_string(file).map_err(|e| Failure::other(format!("cannot read {}: {e}", file.display())))?;
    let relabels: Vec<Relabel> =
        serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", file.display())))?;
    let p = open(g)?;
    p.snapshot_config()?;
    let events = p.apply_relabels(relabels.iter().map(|r| (r.sample_id.as_str(), r.text.as_str())), now_ms())?;
    for ev in &events {
        println!("{}  {:?}  {}", ev.sample_id, ev.human_label_cleaned, fmt4(ev.new_score));
    }
    Ok(())
}

fn export_all(g: &Global, out: &Path) -> CliResult {
    let p = open(g)?;
    let (clusters, _): (ClustersStage, String) = p.require(stages::CLUSTERS, "export")?;
    let (emb, _): (EmbeddingsStage, String) = p.require(stages::EMBEDDINGS, "export")?;
    std::fs::create_dir_all(out).map_err(|e| Failure::other(format!("cannot create {}: {e}", out.display())))?;
    export::write_assignments(&clusters.output, create(out, "assignments.tsv")?).map_err(write_failed)?;
    export::write_curve(&clusters.output.solution, create(out, "curve.tsv")?).map_err(write_failed)?;
    export::write_embeddings(&emb.output, create(out, "embeddings.tsv")?).map_err(write_failed)?;
    match p.require::<CompositesStage>(stages::COMPOSITES, "export") {
        Ok((c, _)) => export::write_composites(&c.output, create(out, "composites.tsv")?).map_err(write_failed)?,
        Err(scenetax::Error::MissingPredecessor { .. }) => {}
        Err(e) => return Err(e.into()),
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn synth_cmd(out: &Path, seed: u64, check: bool) -> CliResult {
    let corpus = synth::generate(seed);
    if check {
        let diff = corpus.diff_against(out);
        if diff.is_empty() {
            println!("{} matches seed {seed}", out.display());
            return Ok(());
        }
        for d in &diff {
            eprintln!("differs: {}", d.display());
        }
        return Err(Failure::validation(format!("{} files differ", diff.len())));
    }
    corpus
        .write_to(out)
        .map_err(|e| Failure::other(format!("cannot write {}: {e}", out.display())))?;
    println!("wrote {} files to {}", corpus.files.len(), out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult {
    let g = &cli.global;
    match cli.command {
        Command::Label => run_stages(&open(g)?, &[Pipeline::run_labels, Pipeline::run_candidates]),
        Command::Score => run_stages(&open(g)?, &[Pipeline::run_scores, Pipeline::init_triage]),
        Command::Triage(TriageCommand::Serve { bind }) => serve(g, bind),
        Command::Triage(TriageCommand::Status { json }) => triage_status(g, json),
        Command::Triage(TriageCommand::Apply { file }) => triage_apply(g, &file),
        Command::Cluster => run_stages(&open(g)?, &[Pipeline::run_embeddings, Pipeline::run_clusters]),
        Command::Composite => run_stages(&open(g)?, &[Pipeline::run_composites]),
        Command::Report { json } => {
            let p = open(g)?;
            p.snapshot_config()?;
            p.run_report()?;
            let report = p.load_report()?;
            if json {
                println!("{}", to_json(&report));
            } else {
                print!("{}", render_text(&report));
            }
            Ok(())
        }
        Command::Run { resume } => {
            let p = open(g)?;
            let summary = p.run(resume)?;
            print_outcomes(&summary.stages);
            eprintln!("backend calls: {}", summary.backend_calls);
            if let Some(n) = summary.paused_for_review {
                eprintln!(
                    "paused: {n} sample(s) waiting for review; use `scenetax triage serve`, then `scenetax run --continue`"
                );
            } else {
                println!();
                print!("{}", render_text(&p.load_report()?));
            }
            Ok(())
        }
        Command::Export { out } => export_all(g, &out),
        Command::Synth { out, seed, check } => synth_cmd(&out, seed, check),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
