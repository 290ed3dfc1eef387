//! HTTP service over an immutable engine snapshot.
//!
//! Queries run against an `Arc<SearchEngine>` handle that is swapped
//! atomically after a background rebuild, so searches never observe a
//! half-updated index. Admission is bounded by a semaphore sized at
//! `max_concurrent_queries`; requests over the limit get 503 instead of
//! queueing without bound.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::SecondsFormat;
use serde::{Deserialize, Serialize};
use serde_json::json;

use finder_core::ingest::{ingest_parsed, resolve_enrichers};
use finder_core::model::CorpusRecord;
use finder_core::query::FilterMap;
use finder_core::rank::reassign_doc_ids;
use finder_core::storage::{load_snapshot, save_snapshot};
use finder_core::{Document, Mode, SearchEngine};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub port: u16,
    pub index_dir: PathBuf,
    pub max_concurrent_queries: usize,
    pub request_timeout_ms: u64,
    pub log_level: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            port: 7700,
            index_dir: PathBuf::from("index"),
            max_concurrent_queries: 256,
            request_timeout_ms: 10_000,
            log_level: "info".into(),
        }
    }
}

pub struct AppState {
    engine: RwLock<Arc<SearchEngine>>,
    limiter: Arc<tokio::sync::Semaphore>,
    /// Serializes rebuilds so concurrent uploads cannot interleave their
    /// snapshot writes.
    rebuild_lock: tokio::sync::Mutex<()>,
    index_dir: PathBuf,
    snapshot_version: AtomicU64,
    request_timeout: Duration,
}

impl AppState {
    pub fn new(engine: SearchEngine, config: &ServiceConfig) -> Arc<Self> {
        Arc::new(AppState {
            engine: RwLock::new(Arc::new(engine)),
            limiter: Arc::new(tokio::sync::Semaphore::new(config.max_concurrent_queries)),
            rebuild_lock: tokio::sync::Mutex::new(()),
            index_dir: config.index_dir.clone(),
            snapshot_version: AtomicU64::new(1),
            request_timeout: Duration::from_millis(config.request_timeout_ms),
        })
    }

    /// Cheap clone of the current engine handle; holders keep using the
    /// snapshot they started with even if a rebuild swaps it mid-request.
    pub fn engine(&self) -> Arc<SearchEngine> {
        self.engine.read().expect("engine lock poisoned").clone()
    }

    /// Install a new engine and return the new snapshot version.
    pub fn swap_engine(&self, engine: SearchEngine) -> u64 {
        *self.engine.write().expect("engine lock poisoned") = Arc::new(engine);
        self.snapshot_version.fetch_add(1, Ordering::SeqCst) + 1
    }

    pub fn snapshot_version(&self) -> u64 {
        self.snapshot_version.load(Ordering::SeqCst)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/search", post(search_handler))
        .route("/v1/documents", post(ingest_handler))
        .route("/v1/health", get(health_handler))
        .with_state(state)
}

/// Load the snapshot and serve it until the process is stopped.
pub async fn serve(config: ServiceConfig) -> finder_core::Result<()> {
    let engine = load_snapshot(&config.index_dir)?;
    let state = AppState::new(engine, &config);
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(
        addr = %listener.local_addr()?,
        docs = state.engine().docs().len(),
        "finder service listening"
    );
    axum::serve(listener, router(state)).await?;
    Ok(())
}

fn error_response(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    let body = json!({"error": {"code": code, "message": message.into()}});
    (status, Json(body)).into_response()
}

#[derive(Debug, Deserialize)]
struct SearchBody {
    query: String,
    #[serde(default)]
    filters: FilterMap,
    #[serde(default)]
    top_k: Option<usize>,
    #[serde(default)]
    mode: Option<String>,
}

async fn search_handler(
    State(state): State<Arc<AppState>>,
    body: Result<Json<SearchBody>, JsonRejection>,
) -> Response {
    let Json(body) = match body {
        Ok(body) => body,
        Err(rejection) => {
            return error_response(StatusCode::BAD_REQUEST, "bad_request", rejection.body_text())
        }
    };
    let permit = match state.limiter.clone().try_acquire_owned() {
        Ok(permit) => permit,
        Err(_) => {
            return error_response(
                StatusCode::SERVICE_UNAVAILABLE,
                "over_capacity",
                "concurrent query limit reached; retry shortly",
            )
        }
    };
    let mode = match body.mode.as_deref() {
        None => Mode::Hybrid,
        Some(raw) => match raw.parse::<Mode>() {
            Ok(mode) => mode,
            Err(message) => return error_response(StatusCode::BAD_REQUEST, "bad_request", message),
        },
    };
    let top_k = body.top_k.unwrap_or(10);

    let engine = state.engine();
    let query = body.query.clone();
    let filters = body.filters.clone();
    let started = std::time::Instant::now();
    // The permit moves into the blocking task so capacity frees only when
    // the search actually finishes, even if the request times out first.
    let work = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        engine.search(&query, &filters, mode, top_k)
    });

    match tokio::time::timeout(state.request_timeout, work).await {
        Err(_) => {
            tracing::warn!(query = %body.query, class = "timeout", "search timed out");
            error_response(StatusCode::SERVICE_UNAVAILABLE, "timeout", "query timed out")
        }
        Ok(Err(join_err)) => {
            tracing::error!(query = %body.query, class = "panic", error = %join_err, "search task failed");
            error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", join_err.to_string())
        }
        Ok(Ok(Err(err))) => {
            let (status, code) = if err.is_data_error() {
                (StatusCode::BAD_REQUEST, "bad_request")
            } else {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            };
            tracing::warn!(query = %body.query, class = code, error = %err, "search rejected");
            error_response(status, code, err.to_string())
        }
        Ok(Ok(Ok(response))) => {
            tracing::info!(
                query = %body.query,
                mode = ?mode,
                hits = response.hits.len(),
                total_ms = started.elapsed().as_secs_f64() * 1000.0,
                timings_ms = ?response.timings_ms,
                "search ok"
            );
            (StatusCode::OK, Json(response)).into_response()
        }
    }
}

#[derive(Debug, Serialize)]
struct IngestLineError {
    line: usize,
    message: String,
}

/// Accepts a JSONL document batch. Valid records are acknowledged with 202
/// and folded into the index by a background rebuild; the request never
/// waits for indexing. A batch with no valid record is a 400.
async fn ingest_handler(State(state): State<Arc<AppState>>, body: String) -> Response {
    let engine = state.engine();
    let config = engine.config().ingest.clone();
    let enrichers = match resolve_enrichers(&config.enrichers) {
        Ok(enrichers) => enrichers,
        Err(err) => {
            return error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", err.to_string())
        }
    };

    let mut accepted: Vec<Document> = Vec::new();
    let mut errors: Vec<IngestLineError> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in body.lines().enumerate() {
        let line_no = i + 1;
        // Doc ids are temporary here; the rebuild renumbers the merged corpus.
        let outcome = CorpusRecord::parse_line(line, line_no)
            .and_then(|record| record.map(|r| ingest_parsed(r, &config, 0, &enrichers)).transpose());
        match outcome {
            Ok(None) => continue,
            Ok(Some(doc)) => {
                if seen.insert(doc.document_number().to_string()) {
                    accepted.push(doc);
                } else {
                    errors.push(IngestLineError {
                        line: line_no,
                        message: format!(
                            "duplicate document number {:?} within upload",
                            doc.document_number()
                        ),
                    });
                }
            }
            Err(err) => errors.push(IngestLineError { line: line_no, message: err.to_string() }),
        }
    }

    if accepted.is_empty() {
        let body = json!({
            "error": {"code": "bad_request", "message": "no ingestible documents in request body"},
            "accepted": 0,
            "rejected": errors.len(),
            "errors": errors,
        });
        return (StatusCode::BAD_REQUEST, Json(body)).into_response();
    }

    let response = json!({
        "accepted": accepted.len(),
        "rejected": errors.len(),
        "errors": errors,
    });
    tokio::spawn(rebuild_task(state, accepted));
    (StatusCode::ACCEPTED, Json(response)).into_response()
}

/// Merge uploaded documents into the current corpus (upsert by document
/// number), rebuild every index, persist the snapshot, then swap the
/// serving handle. On failure the previous snapshot keeps serving.
async fn rebuild_task(state: Arc<AppState>, incoming: Vec<Document>) {
    let _guard = state.rebuild_lock.lock().await;
    let current = state.engine();
    let index_dir = state.index_dir.clone();
    let result = tokio::task::spawn_blocking(move || {
        let mut docs: Vec<Document> = current.docs().to_vec();
        let mut by_number: HashMap<String, usize> = docs
            .iter()
            .enumerate()
            .map(|(i, doc)| (doc.document_number().to_string(), i))
            .collect();
        for doc in incoming {
            match by_number.get(doc.document_number()) {
                Some(&slot) => docs[slot] = doc,
                None => {
                    by_number.insert(doc.document_number().to_string(), docs.len());
                    docs.push(doc);
                }
            }
        }
        reassign_doc_ids(&mut docs);
        let engine = SearchEngine::build(
            docs,
            current.glossary().clone(),
            current.config().clone(),
            chrono::Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        )?;
        save_snapshot(&engine, &index_dir)?;
        Ok::<SearchEngine, finder_core::Error>(engine)
    })
    .await;

    match result {
        Ok(Ok(engine)) => {
            let docs = engine.docs().len();
            let version = state.swap_engine(engine);
            tracing::info!(docs, snapshot_version = version, "index rebuilt and swapped");
        }
        Ok(Err(err)) => {
            tracing::error!(class = "rebuild_failed", error = %err, "keeping previous snapshot")
        }
        Err(err) => {
            tracing::error!(class = "rebuild_panic", error = %err, "keeping previous snapshot")
        }
    }
}

/// Liveness probe; reads the engine handle without touching the limiter or
/// the rebuild lock, so it stays responsive during rebuilds and overload.
async fn health_handler(State(state): State<Arc<AppState>>) -> Response {
    let engine = state.engine();
    let body = json!({
        "status": "ok",
        "docs": engine.docs().len(),
        "snapshot_version": state.snapshot_version(),
    });
    (StatusCode::OK, Json(body)).into_response()
}

#[cfg(test)]
mod tests {
    use super::*;
    use finder_core::query::Glossary;
    use finder_core::EngineConfig;

    fn tiny_engine() -> SearchEngine {
        let corpus = concat!(
            r#"{"metadata":{"dataset_document_number":"T-1","dataset_name":"set","dataset_file_title":"alpha report"},"body":"alpha beta gamma"}"#,
            "\n",
            r#"{"metadata":{"dataset_document_number":"T-2","dataset_name":"set","dataset_file_title":"delta report"},"body":"delta epsilon zeta"}"#,
            "\n",
        );
        let mut config = EngineConfig::default();
        config.embed_dim = 16;
        let docs = finder_core::ingest::ingest_corpus(corpus, &config.ingest).unwrap();
        SearchEngine::build(docs, Glossary::empty(), config, "2026-01-01T00:00:00Z".into())
            .unwrap()
    }

    #[test]
    fn swap_engine_increments_version_and_replaces_handle() {
        let state = AppState::new(tiny_engine(), &ServiceConfig::default());
        assert_eq!(state.snapshot_version(), 1);
        let before = state.engine();
        let version = state.swap_engine(tiny_engine());
        assert_eq!(version, 2);
        assert_eq!(state.snapshot_version(), 2);
        assert!(!Arc::ptr_eq(&before, &state.engine()));
    }

    #[test]
    fn old_handles_survive_a_swap() {
        let state = AppState::new(tiny_engine(), &ServiceConfig::default());
        let held = state.engine();
        state.swap_engine(tiny_engine());
        // The pre-swap handle still answers queries.
        let response = held.search("alpha", &FilterMap::new(), Mode::Hybrid, 5).unwrap();
        assert!(!response.hits.is_empty());
    }

    #[test]
    fn default_config_matches_documented_limits() {
        let config = ServiceConfig::default();
        assert_eq!(config.port, 7700);
        assert_eq!(config.max_concurrent_queries, 256);
        assert_eq!(config.request_timeout_ms, 10_000);
    }
}
