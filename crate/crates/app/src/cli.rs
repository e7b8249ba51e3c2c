use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use serde_json::json;

use floodfuse::corpus::DocumentStore;
use floodfuse::engine::{build_store, Engine, EngineConfig, ErrorKind};
use floodfuse::eval::{
    load_ground_truth, load_queries, predictions_geojson, retrieval_quality, run_ablation, write_metrics_csv,
    write_records_csv, ConfigLabel,
};
use floodfuse::exec::Exec;
use floodfuse::geo::load_zip_regions;
use floodfuse::index::build_sparse_with;
use floodfuse::types::TimeWindow;

#[derive(Debug, Parser)]
#[command(name = "floodfuse", version, about = "ZIP-level flood extent and damage estimates from fused evidence")]
pub struct Cli {
    /// Engine configuration file
    #[arg(long, global = true, default_value = "floodfuse.toml")]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest and filter the configured corpora into a document store and postings dump
    Ingest {
        #[arg(long)]
        out: PathBuf,
    },
    /// Assess one ZIP and time window; prints the response JSON
    Assess {
        #[arg(long)]
        zip: String,
        #[arg(long)]
        start: NaiveDate,
        #[arg(long)]
        end: NaiveDate,
        #[arg(long, default_value = "multimodal")]
        mode: ConfigLabel,
        /// Skip the response cache
        #[arg(long)]
        no_cache: bool,
    },
    /// Run the ablation table over the configured queries; prints metrics CSV
    Eval {
        /// Directory for records.csv, metrics.csv, summary.json and predictions.geojson
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated subset of text_only,text_caption,multimodal
        #[arg(long, value_delimiter = ',')]
        configs: Option<Vec<ConfigLabel>>,
    },
    /// Serve the HTTP API
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: 1, error: e.into() }
    }
}

fn load_config(path: &Path) -> anyhow::Result<EngineConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = EngineConfig::from_toml_str(&text)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn ingest(config: &Path, out: &Path) -> anyhow::Result<serde_json::Value> {
    let cfg = load_config(config)?;
    let exec = if cfg.runtime.parallel { Exec::Parallel } else { Exec::Sequential };
    let (store, stats): (DocumentStore, _) = build_store(&cfg, exec)?;
    let sparse = build_sparse_with(&store, cfg.retrieval.bm25, exec)?;
    fs::create_dir_all(out)?;
    store.write_jsonl(&out.join("documents.jsonl"))?;
    sparse.write_postings_jsonl(&out.join("postings.jsonl"))?;
    let summary = json!({
        "documents": store.len(),
        "terms": sparse.term_count(),
        "filter": stats,
    });
    fs::write(out.join("ingest_summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

pub fn assess<W: Write>(
    config: &Path,
    zip: &str,
    start: NaiveDate,
    end: NaiveDate,
    mode: ConfigLabel,
    use_cache: bool,
    out: &mut W,
) -> Result<(), Failure> {
    let window = TimeWindow::from_dates(start, end).map_err(|e| Failure {
        code: 2,
        error: e.into(),
    })?;
    let engine = Engine::load(config)?;
    let resp = engine.assess_with(zip, window, mode, use_cache).map_err(|e| Failure {
        code: match e.kind() {
            ErrorKind::BadRequest => 2,
            ErrorKind::NotFound => 4,
            ErrorKind::Upstream => 5,
            ErrorKind::Internal => 1,
        },
        error: e.into(),
    })?;
    out.write_all(resp.to_json().as_bytes())?;
    Ok(())
}

pub fn eval<W: Write>(
    config: &Path,
    out_dir: Option<&Path>,
    configs: Option<&[ConfigLabel]>,
    stdout: &mut W,
) -> anyhow::Result<()> {
    let engine = Engine::load(config)?;
    let cfg = engine.config();
    let Some(qpath) = &cfg.data.queries else {
        bail!("data.queries is not configured");
    };
    let Some(gpath) = &cfg.data.ground_truth else {
        bail!("data.ground_truth is not configured");
    };
    let queries = load_queries(qpath)?;
    let gt = load_ground_truth(gpath)?;
    let configs = configs.unwrap_or(&ConfigLabel::ALL);
    let report = run_ablation(&queries, configs, &engine, &gt, &cfg.eval, engine.exec())?;
    write_metrics_csv(&report.metrics, &mut *stdout)?;
    if !report.skipped.is_empty() {
        eprintln!("{} query runs skipped", report.skipped.len());
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_records_csv(&report.records, fs::File::create(dir.join("records.csv"))?)?;
        write_metrics_csv(&report.metrics, fs::File::create(dir.join("metrics.csv"))?)?;
        let mut retrieved = Vec::with_capacity(queries.len());
        for q in &queries {
            retrieved.push(engine.retrieved_tweets(q.zip.as_str(), q.window()?)?);
        }
        let gazetteer: Vec<String> = match &cfg.data.gazetteer {
            Some(p) => fs::read_to_string(p)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_owned)
                .collect(),
            None => Vec::new(),
        };
        let quality = retrieval_quality(&retrieved, &cfg.filter.allow_keywords, &gazetteer);
        let summary = json!({
            "metrics": report.metrics,
            "skipped": report.skipped,
            "records": report.records.len(),
            "bootstrap": cfg.eval,
            "retrieval_quality": quality,
        });
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
        let regions = load_zip_regions(&cfg.data.zips)?;
        let geo = predictions_geojson(&report.records, &regions);
        fs::write(dir.join("predictions.geojson"), serde_json::to_string_pretty(&geo)? + "\n")?;
    }
    Ok(())
}

/// Runs a parsed command line, writing command output to `stdout`.
pub fn run<W: Write>(cli: Cli, stdout: &mut W) -> Result<(), Failure> {
    match cli.command {
        Command::Ingest { out } => {
            let summary = ingest(&cli.config, &out)?;
            writeln!(stdout, "{}", serde_json::to_string_pretty(&summary)?)?;
        }
        Command::Assess {
            zip,
            start,
            end,
            mode,
            no_cache,
        } => assess(&cli.config, &zip, start, end, mode, !no_cache, stdout)?,
        Command::Eval { out, configs } => eval(&cli.config, out.as_deref(), configs.as_deref(), stdout)?,
        Command::Serve { addr } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::server::serve(cli.config, addr))?;
        }
    }
    Ok(())
}
