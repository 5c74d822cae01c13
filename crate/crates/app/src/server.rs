//! JSON-over-HTTP service for interactive review.
//!
//! The index and trial records are loaded once and shared read-only by all
//! requests. `/api/generate` is the only route that talks to the network,
//! and it is disabled unless an LLM endpoint is configured.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;
use trialir_core::corpus::{load_corpus, ClinicalTrialDoc, PatientTopic};
use trialir_core::index::InvertedIndex;
use trialir_core::querygen::{note_hash, QueryGenError, QueryGenerator, Transport};
use trialir_core::retrieval::{Bm25Params, Retriever, Rm3Params, RunStrategy, DEFAULT_DEPTH};
use trialir_core::textproc::{Analyzer, ProcessedQuery};

use crate::commands::{build_generator, open_index};
use crate::config::AppConfig;

const SNIPPET_CHARS: usize = 240;
const DEFAULT_K: usize = 10;

pub struct ServiceState {
    index: InvertedIndex,
    analyzer: Analyzer,
    bm25: Bm25Params,
    rm3: Rm3Params,
    trials: HashMap<String, ClinicalTrialDoc>,
    generator: Option<Arc<QueryGenerator>>,
    generate_slots: Arc<Semaphore>,
    audit: Option<Mutex<std::fs::File>>,
}

impl ServiceState {
    /// Open the index and trial records named by the config. `transport`
    /// replaces the HTTP client used for generation.
    pub fn load(cfg: &AppConfig, transport: Option<Arc<dyn Transport>>) -> anyhow::Result<Self> {
        cfg.check_paths(true, true)?;
        let analyzer = cfg.analyzer()?;
        let index = open_index(&cfg.index_path)?;
        // fail at startup rather than on the first query
        Retriever::new(&index, &analyzer, cfg.bm25, cfg.rm3_params())?;
        let corpus = cfg.corpus_path.as_deref().expect("checked above");
        let trials = load_corpus(corpus)?
            .into_iter()
            .map(|d| (d.docno.clone(), d))
            .collect();
        let generator = match &cfg.llm {
            Some(_) => Some(Arc::new(build_generator(cfg, transport)?)),
            None => None,
        };
        let audit = match &cfg.audit_log {
            Some(p) => Some(Mutex::new(
                std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .with_context(|| format!("opening audit log {}", p.display()))?,
            )),
            None => None,
        };
        Ok(ServiceState {
            index,
            analyzer,
            bm25: cfg.bm25,
            rm3: cfg.rm3_params(),
            trials,
            generator,
            generate_slots: Arc::new(Semaphore::new(cfg.parallelism.max(1))),
            audit,
        })
    }

    fn retriever(&self) -> Retriever<'_> {
        Retriever::new(&self.index, &self.analyzer, self.bm25, self.rm3).expect("validated at startup")
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.body[key] = value.into();
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub note: String,
    #[serde(default)]
    pub topic_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub raw_generation: String,
    /// Index-space terms; send them back unchanged as `terms` to search.
    pub processed_terms: Vec<String>,
    pub latency_s: f64,
    pub term_count: usize,
    pub model_name: String,
    pub template_id: String,
    pub from_cache: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SearchRequest {
    /// Index-space terms, as returned by `/api/generate` or `/api/analyze`.
    #[serde(default)]
    pub terms: Option<Vec<String>>,
    #[serde(default)]
    pub note: Option<String>,
    /// Defaults to `generated` when terms are given, `original` otherwise.
    #[serde(default)]
    pub strategy: Option<RunStrategy>,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub docno: String,
    pub score: f64,
    pub title: String,
    pub snippet: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyzeRequest {
    pub text: String,
}

/// The first `SNIPPET_CHARS` characters of the summary, or of the
/// eligibility text when there is no summary, cut at a word boundary.
pub fn snippet(doc: &ClinicalTrialDoc) -> String {
    let src = [&doc.brief_summary, &doc.detailed_description, &doc.eligibility_text]
        .into_iter()
        .find(|s| !s.is_empty())
        .map(String::as_str)
        .unwrap_or("");
    if src.chars().count() <= SNIPPET_CHARS {
        return src.to_string();
    }
    let cut: String = src.chars().take(SNIPPET_CHARS).collect();
    let cut = match cut.rfind(' ') {
        Some(i) if i > SNIPPET_CHARS / 2 => &cut[..i],
        _ => &cut,
    };
    format!("{}...", cut.trim_end())
}

fn clean_terms(terms: &[String]) -> Vec<String> {
    terms
        .iter()
        .map(|t| t.trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// The final query for a search request, and the strategy it resolved to.
pub fn resolve_query(
    retriever: &Retriever<'_>,
    req: &SearchRequest,
) -> Result<(ProcessedQuery, RunStrategy), ApiError> {
    let strategy = req.strategy.unwrap_or(if req.terms.is_some() {
        RunStrategy::Generated
    } else {
        RunStrategy::Original
    });
    let note = req.note.as_deref().unwrap_or("");
    let needs_note = !strategy.needs_generated() || strategy == RunStrategy::Concat;
    if needs_note && note.trim().is_empty() {
        return Err(ApiError::bad_request(format!("strategy {strategy} needs a non-empty note")));
    }
    let generated = if strategy.needs_generated() {
        let Some(terms) = &req.terms else {
            return Err(ApiError::bad_request(format!("strategy {strategy} needs terms")));
        };
        let terms = clean_terms(terms);
        if strategy == RunStrategy::Generated && terms.is_empty() {
            return Err(ApiError::bad_request("terms is empty"));
        }
        Some(ProcessedQuery::new(terms, retriever.analyzer.pipeline_hash()))
    } else {
        None
    };
    let q = retriever
        .final_query(strategy, note, generated.as_ref())
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok((q, strategy))
}

fn unix_time() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn audit(state: &ServiceState, req: &SearchRequest, strategy: RunStrategy, hits: &[SearchHit]) {
    let Some(log) = &state.audit else { return };
    let record = json!({
        "timestamp": unix_time(),
        "note_hash": req.note.as_deref().filter(|n| !n.is_empty()).map(note_hash),
        "terms": req.terms,
        "strategy": strategy,
        "top_docnos": hits.iter().map(|h| h.docno.as_str()).collect::<Vec<_>>(),
    });
    let mut f = log.lock().unwrap_or_else(|e| e.into_inner());
    if let Err(e) = writeln!(f, "{record}") {
        tracing::warn!("audit log write failed: {e}");
    }
}

async fn search(State(state): State<Arc<ServiceState>>, Json(req): Json<SearchRequest>) -> ApiResult<Vec<SearchHit>> {
    let k = req.k.unwrap_or(DEFAULT_K);
    if k == 0 || k > DEFAULT_DEPTH {
        return Err(ApiError::bad_request(format!("k must be in 1..={DEFAULT_DEPTH}")));
    }
    let retriever = state.retriever();
    let (query, strategy) = resolve_query(&retriever, &req)?;
    let ranking = retriever
        .search("api", &query, k)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let hits: Vec<SearchHit> = ranking
        .entries
        .into_iter()
        .map(|e| {
            let doc = state.trials.get(&e.docno);
            SearchHit {
                title: doc.map(|d| d.title.clone()).unwrap_or_default(),
                snippet: doc.map(snippet).unwrap_or_default(),
                docno: e.docno,
                score: e.score,
            }
        })
        .collect();
    audit(&state, &req, strategy, &hits);
    Ok(Json(hits))
}

fn generation_error(e: QueryGenError) -> ApiError {
    let status = match &e {
        QueryGenError::EmptyNote { .. } => StatusCode::BAD_REQUEST,
        QueryGenError::CacheMiss { .. } => StatusCode::SERVICE_UNAVAILABLE,
        QueryGenError::Transport { .. } | QueryGenError::Protocol { .. } | QueryGenError::DegenerateOutput { .. } => {
            StatusCode::BAD_GATEWAY
        }
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    let err = ApiError::new(status, e.to_string());
    if status == StatusCode::BAD_REQUEST {
        err
    } else {
        err.with("fallback", "original")
    }
}

async fn generate(
    State(state): State<Arc<ServiceState>>,
    Json(req): Json<GenerateRequest>,
) -> ApiResult<GenerateResponse> {
    let Some(generator) = state.generator.clone() else {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no LLM endpoint is configured")
            .with("fallback", "original")
            .with("hint", "search with the original note using strategy \"original\""));
    };
    if req.note.trim().is_empty() {
        return Err(ApiError::bad_request("note is empty"));
    }
    let _permit = state
        .generate_slots
        .clone()
        .acquire_owned()
        .await
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "shutting down"))?;
    let topic = PatientTopic {
        topic_id: req.topic_id.unwrap_or_else(|| "api".into()),
        note_text: req.note,
    };
    let bundle = tokio::task::spawn_blocking(move || generator.generate(&topic))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(generation_error)?;
    Ok(Json(GenerateResponse {
        raw_generation: bundle.raw_generation,
        processed_terms: bundle.processed.terms,
        latency_s: bundle.latency_s,
        term_count: bundle.term_count,
        model_name: bundle.model_name,
        template_id: bundle.template_id,
        from_cache: bundle.from_cache,
    }))
}

async fn analyze(State(state): State<Arc<ServiceState>>, Json(req): Json<AnalyzeRequest>) -> Json<Value> {
    Json(json!({ "terms": state.analyzer.analyze(&req.text) }))
}

async fn trial(State(state): State<Arc<ServiceState>>, UrlPath(docno): UrlPath<String>) -> ApiResult<ClinicalTrialDoc> {
    match state.trials.get(&docno) {
        Some(d) => Ok(Json(d.clone())),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "unknown trial").with("docno", docno)),
    }
}

async fn health(State(state): State<Arc<ServiceState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "index": {
            "n_docs": state.index.n_docs(),
            "avgdl": state.index.avgdl(),
            "vocab_size": state.index.vocab_size(),
            "pipeline_hash": state.index.stats_hash(),
        },
        "n_trials": state.trials.len(),
        "llm": {
            "configured": state.generator.is_some(),
            "model_name": state.generator.as_ref().map(|g| g.config().model_name.clone()),
        },
    }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such route")
}

pub fn router(state: Arc<ServiceState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/search", post(search))
        .route("/api/generate", post(generate))
        .route("/api/analyze", post(analyze))
        .route("/api/trials/{docno}", get(trial))
        .route("/api/{*rest}", get(not_found).post(not_found))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Run the service until interrupted.
pub fn serve(cfg: &AppConfig) -> anyhow::Result<()> {
    let state = Arc::new(ServiceState::load(cfg, None)?);
    let app = router(state, cfg.static_dir.as_deref());
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting runtime")?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.serve_addr)
            .await
            .with_context(|| format!("binding {}", cfg.serve_addr))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("serving")
    })
}
