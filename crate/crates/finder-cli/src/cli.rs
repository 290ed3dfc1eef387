//! Argument model and subcommand drivers for the `finder` binary.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (bad corpus, query,
//! qrels, or snapshot contents), 3 internal error (I/O, runtime).

use std::path::{Path, PathBuf};

use chrono::SecondsFormat;
use clap::{Parser, Subcommand, ValueEnum};

use finder_core::eval::{parse_queries, run_benchmark, BenchmarkOptions, QrelSet};
use finder_core::ingest::{ingest_corpus, parse_gazetteer, Gazetteer};
use finder_core::query::{FilterMap, Glossary};
use finder_core::storage::{load_snapshot, save_snapshot};
use finder_core::{EngineConfig, Mode, SearchEngine};

use crate::server::{self, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "finder", version, about = "Hybrid lexical/semantic document search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an index snapshot from a JSONL corpus.
    Ingest {
        /// Corpus file: one JSON document record per line.
        #[arg(long)]
        corpus: PathBuf,
        /// Gazetteer JSON used for extractive tagging: {"category": ["phrase", ...]}.
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        /// Glossary JSON used for query expansion: {"abbr": ["expansion", ...]}.
        #[arg(long)]
        glossary: Option<PathBuf>,
        /// Directory the snapshot is written to (created or replaced).
        #[arg(long)]
        out: PathBuf,
        /// Embedding dimensionality for the dense index.
        #[arg(long, default_value_t = 256)]
        embed_dim: usize,
        /// Maximum tokens per chunk.
        #[arg(long, default_value_t = 256)]
        max_chunk_tokens: u32,
        /// Tokens of overlap between consecutive chunks.
        #[arg(long, default_value_t = 32)]
        chunk_overlap_tokens: u32,
    },
    /// Query an index snapshot.
    Search {
        /// Snapshot directory (falls back to $FINDER_INDEX_DIR).
        #[arg(long, env = "FINDER_INDEX_DIR")]
        index: PathBuf,
        /// Query text.
        #[arg(long)]
        query: String,
        /// Metadata filter as field=value; repeatable.
        #[arg(long = "filter")]
        filters: Vec<String>,
        /// Number of results to return.
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        /// Retrieval mode.
        #[arg(long, value_enum, default_value_t = CliMode::Hybrid)]
        mode: CliMode,
        /// Print the full response as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Score an index snapshot against a query set with relevance judgments.
    Eval {
        /// Snapshot directory (falls back to $FINDER_INDEX_DIR).
        #[arg(long, env = "FINDER_INDEX_DIR")]
        index: PathBuf,
        /// Queries file: JSONL with {"query_id", "text", "filters"?}.
        #[arg(long)]
        queries: PathBuf,
        /// Relevance judgments in TREC format: "query_id 0 doc_id relevance".
        #[arg(long)]
        qrels: PathBuf,
        /// Ranking cutoffs for precision/recall/nDCG.
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,30")]
        cutoffs: Vec<usize>,
        /// Retrieval mode.
        #[arg(long, value_enum, default_value_t = CliMode::Hybrid)]
        mode: CliMode,
        /// Results retrieved per query before applying cutoffs.
        #[arg(long, default_value_t = 100)]
        top_k: usize,
        /// Execute queries in parallel (metrics are unaffected).
        #[arg(long)]
        parallel: bool,
        /// Also write ranked results as run lines to this file.
        #[arg(long)]
        run_out: Option<PathBuf>,
    },
    /// Serve an index snapshot over HTTP.
    Serve {
        /// Snapshot directory (falls back to $FINDER_INDEX_DIR).
        #[arg(long, env = "FINDER_INDEX_DIR")]
        index: PathBuf,
        /// TCP port to listen on.
        #[arg(long, default_value_t = 7700)]
        port: u16,
        /// Admission limit for simultaneously executing queries.
        #[arg(long, default_value_t = 256)]
        max_concurrent_queries: usize,
        /// Per-request timeout in milliseconds.
        #[arg(long, default_value_t = 10_000)]
        request_timeout_ms: u64,
        /// Log level filter (e.g. info, debug, finder_core=trace).
        #[arg(long, default_value = "info")]
        log_level: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliMode {
    Hybrid,
    Sparse,
    Dense,
    Auto,
}

impl From<CliMode> for Mode {
    fn from(mode: CliMode) -> Mode {
        match mode {
            CliMode::Hybrid => Mode::Hybrid,
            CliMode::Sparse => Mode::Sparse,
            CliMode::Dense => Mode::Dense,
            CliMode::Auto => Mode::Auto,
        }
    }
}

/// Failures carry the exit code class; clap errors are handled in `main`.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(msg) | Failure::Data(msg) | Failure::Internal(msg) => f.write_str(msg),
        }
    }
}

impl From<finder_core::Error> for Failure {
    fn from(err: finder_core::Error) -> Self {
        if err.is_data_error() {
            Failure::Data(err.to_string())
        } else {
            Failure::Internal(err.to_string())
        }
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))
}

/// Parse repeated `--filter field=value` arguments.
pub fn parse_filters(raw: &[String]) -> Result<FilterMap, Failure> {
    let mut filters = FilterMap::new();
    for item in raw {
        let Some((field, value)) = item.split_once('=') else {
            return Err(Failure::Usage(format!("bad filter {item:?}: expected field=value")));
        };
        let (field, value) = (field.trim(), value.trim());
        if field.is_empty() || value.is_empty() {
            return Err(Failure::Usage(format!("bad filter {item:?}: expected field=value")));
        }
        filters.insert(field.to_string(), value.to_string());
    }
    Ok(filters)
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ingest {
            corpus,
            gazetteer,
            glossary,
            out,
            embed_dim,
            max_chunk_tokens,
            chunk_overlap_tokens,
        } => run_ingest(IngestArgs {
            corpus,
            gazetteer,
            glossary,
            out,
            embed_dim,
            max_chunk_tokens,
            chunk_overlap_tokens,
        }),
        Command::Search { index, query, filters, top_k, mode, json } => {
            run_search(&index, &query, &filters, top_k, mode, json)
        }
        Command::Eval { index, queries, qrels, cutoffs, mode, top_k, parallel, run_out } => {
            run_eval(&index, &queries, &qrels, &cutoffs, mode, top_k, parallel, run_out.as_deref())
        }
        Command::Serve { index, port, max_concurrent_queries, request_timeout_ms, log_level } => {
            run_serve(ServiceConfig {
                port,
                index_dir: index,
                max_concurrent_queries,
                request_timeout_ms,
                log_level,
            })
        }
    }
}

struct IngestArgs {
    corpus: PathBuf,
    gazetteer: Option<PathBuf>,
    glossary: Option<PathBuf>,
    out: PathBuf,
    embed_dim: usize,
    max_chunk_tokens: u32,
    chunk_overlap_tokens: u32,
}

fn run_ingest(args: IngestArgs) -> Result<(), Failure> {
    let corpus_text = read_file(&args.corpus)?;
    let gazetteer = match &args.gazetteer {
        Some(path) => parse_gazetteer(&read_file(path)?)?,
        None => Gazetteer::new(),
    };
    let glossary = match &args.glossary {
        Some(path) => Glossary::parse(&read_file(path)?)?,
        None => Glossary::empty(),
    };

    let mut config = EngineConfig::default();
    config.embed_dim = args.embed_dim;
    config.ingest.max_chunk_tokens = args.max_chunk_tokens;
    config.ingest.chunk_overlap_tokens = args.chunk_overlap_tokens;
    config.ingest.gazetteer = gazetteer;

    let docs = ingest_corpus(&corpus_text, &config.ingest)?;
    let created_at = chrono::Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true);
    let engine = SearchEngine::build(docs, glossary, config, created_at)?;
    let manifest = save_snapshot(&engine, &args.out)?;
    println!(
        "indexed {} documents ({} chunks) into {}",
        manifest.counts.documents,
        manifest.counts.chunks,
        args.out.display()
    );
    Ok(())
}

fn run_search(
    index: &Path,
    query: &str,
    raw_filters: &[String],
    top_k: usize,
    mode: CliMode,
    json: bool,
) -> Result<(), Failure> {
    let filters = parse_filters(raw_filters)?;
    let engine = load_snapshot(index)?;
    let response = engine.search(query, &filters, mode.into(), top_k)?;
    if json {
        println!("{}", to_pretty(&response)?);
        return Ok(());
    }
    if response.hits.is_empty() {
        println!("no results");
        return Ok(());
    }
    println!("{:>4}  {:>8}  {:<18}  {:<18}  title", "rank", "score", "document", "matched via");
    for hit in &response.hits {
        println!(
            "{:>4}  {:>8.4}  {:<18}  {:<18}  {}",
            hit.rank,
            hit.score,
            hit.document_number,
            hit.matched_via.as_str(),
            hit.title
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_eval(
    index: &Path,
    queries: &Path,
    qrels: &Path,
    cutoffs: &[usize],
    mode: CliMode,
    top_k: usize,
    parallel: bool,
    run_out: Option<&Path>,
) -> Result<(), Failure> {
    if cutoffs.is_empty() {
        return Err(Failure::Usage("at least one cutoff is required".into()));
    }
    let engine = load_snapshot(index)?;
    let queries = parse_queries(&read_file(queries)?)?;
    let qrels = QrelSet::parse(&read_file(qrels)?)?;
    let options = BenchmarkOptions { top_k, parallel, ..BenchmarkOptions::default() };
    let outcome = run_benchmark(&engine, &queries, &qrels, cutoffs, mode.into(), &options)?;

    if let Some(path) = run_out {
        let mut text = outcome.run_lines.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        std::fs::write(path, text)
            .map_err(|e| Failure::Internal(format!("cannot write {}: {e}", path.display())))?;
    }

    let report = serde_json::json!({
        "metrics": outcome.metrics,
        "certainty": outcome.certainty,
        "latency": outcome.latency,
        "failures": outcome.failures,
    });
    println!("{}", to_pretty(&report)?);
    Ok(())
}

fn run_serve(config: ServiceConfig) -> Result<(), Failure> {
    let filter = tracing_subscriber::EnvFilter::try_new(&config.log_level)
        .map_err(|e| Failure::Usage(format!("bad log level {:?}: {e}", config.log_level)))?;
    // Ignore double-init: tests may start several servers in one process.
    let _ = tracing_subscriber::fmt().json().with_env_filter(filter).try_init();

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::Internal(format!("cannot start async runtime: {e}")))?;
    runtime.block_on(server::serve(config)).map_err(Failure::from)
}

fn to_pretty<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure::Internal(e.to_string()))
}
