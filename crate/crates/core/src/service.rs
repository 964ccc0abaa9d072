//! HTTP facade over repair, memory and dataset operations.
//!
//! `POST /repair` is read-only; `POST /feedback` is the only route that
//! changes state.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use crate::config::{Config, ConfigError, CORRECTORS};
use crate::corrector::{CorrectionRequest, Corrector, CorrectorError, FeedbackSource};
use crate::dataset::{self, synthetic, EvalTuple, LoadMode};
use crate::edit::{parse_edit, EditCommand, EditError};
use crate::engine::apply;
use crate::memory::{LookupResult, Memory, MemoryError, MemoryRecord};
use crate::script::{Script, ScriptError};

const DEFAULT_K: usize = 5;
const DEFAULT_LIMIT: usize = 50;
const MAX_LIMIT: usize = 1000;

pub struct AppState {
    config: Config,
    memory: Memory,
    correctors: BTreeMap<String, Arc<dyn Corrector>>,
    dataset: Vec<EvalTuple>,
}

impl AppState {
    /// Opens the memory and dataset named in `config` and builds every
    /// corrector it can (`external` only when `corrector_url` is set).
    pub fn from_config(config: Config) -> Result<AppState, ServiceError> {
        let memory = config.open_memory()?;
        let dataset = match &config.dataset_path {
            Some(p) => dataset::load(p, LoadMode::Strict)?.tuples,
            None => dataset::load_str(synthetic::BUNDLED_JSONL, LoadMode::Strict)?.tuples,
        };
        Self::new(config, memory, dataset)
    }

    pub fn new(config: Config, memory: Memory, dataset: Vec<EvalTuple>) -> Result<AppState, ServiceError> {
        config.validate()?;
        let mut correctors = BTreeMap::new();
        for name in CORRECTORS {
            match config.corrector(name) {
                Ok(c) => {
                    correctors.insert(name.to_owned(), Arc::from(c));
                }
                Err(ConfigError::Missing(_)) if name != config.default_corrector => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(AppState {
            config,
            memory,
            correctors,
            dataset,
        })
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn config(&self) -> &Config {
        &self.config
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl std::fmt::Display) -> Self {
        ApiError {
            status,
            body: json!({ "error": kind, "message": message.to_string() }),
        }
    }

    fn bad_request(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn script(field: &str, e: ScriptError) -> Self {
        let mut err = Self::new(StatusCode::BAD_REQUEST, "parse_error", format!("{field}: {e}"));
        if let ScriptError::Syntax { line, column, .. } | ScriptError::Unsupported { line, column, .. } = e {
            err.body["line"] = json!(line);
            err.body["column"] = json!(column);
        }
        err.body["field"] = json!(field);
        err
    }

    fn edit(e: EditError) -> Self {
        let mut err = Self::new(StatusCode::BAD_REQUEST, "parse_error", format!("edit: {e}"));
        if let EditError::Parse { span, .. } = e {
            err.body["span"] = json!([span.start, span.end]);
        }
        err.body["field"] = json!("edit");
        err
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<MemoryError> for ApiError {
    fn from(e: MemoryError) -> Self {
        match e {
            MemoryError::Embed(_) => Self::new(StatusCode::BAD_GATEWAY, "embedding_backend", e),
            MemoryError::EmptyFeedback => Self::bad_request(e),
            _ => Self::internal(e),
        }
    }
}

impl From<CorrectorError> for ApiError {
    fn from(e: CorrectorError) -> Self {
        Self::new(StatusCode::BAD_GATEWAY, "corrector_unavailable", e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn parse_script(field: &str, dot: &str) -> Result<Script, ApiError> {
    Script::from_dot(dot).map_err(|e| ApiError::script(field, e))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RepairRequest {
    script_dot: String,
    #[serde(default)]
    feedback: Option<String>,
    #[serde(default)]
    corrector: Option<String>,
}

#[derive(Serialize)]
struct RepairResponse {
    edit: EditCommand,
    repaired_dot: String,
    feedback_source: FeedbackSource,
    feedback: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    similarity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    retrieved_id: Option<u64>,
    corrector: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

async fn repair(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<RepairResponse> {
    let req: RepairRequest = parse_body(&body)?;
    let script = parse_script("script_dot", &req.script_dot)?;
    let name = req.corrector.unwrap_or_else(|| state.config.default_corrector.clone());
    let corrector = state
        .correctors
        .get(&name)
        .cloned()
        .ok_or_else(|| ApiError::bad_request(format!("corrector `{name}` is not available")))?;
    let feedback = req.feedback.filter(|f| !f.trim().is_empty());
    let st = state.clone();
    blocking(move || {
        let request = match feedback {
            Some(f) => CorrectionRequest::with_user_feedback(script, f),
            None => match st.memory.lookup(&script, st.config.threshold)? {
                Some(hit) => CorrectionRequest::from_memory(script, hit),
                None => CorrectionRequest::without_feedback(script),
            },
        };
        let result = corrector.correct(&request)?;
        if let (Some(rejected), FeedbackSource::User) = (&result.rejected_edit, request.source()) {
            let mut err = ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "inapplicable_edit",
                result.note.as_deref().unwrap_or("proposed edit does not apply"),
            );
            err.body["edit"] = json!(rejected);
            return Err(err);
        }
        Ok(Json(RepairResponse {
            edit: result.edit,
            repaired_dot: result.repaired.to_dot(),
            feedback_source: request.source(),
            feedback: request.feedback().map(str::to_owned),
            similarity: request.retrieved().map(|h| h.similarity),
            retrieved_id: request.retrieved().map(|h| h.record.id),
            corrector: result.corrector_name,
            note: result.note,
        }))
    })
    .await?
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackRequest {
    script_dot: String,
    feedback: String,
    #[serde(default)]
    edit: Option<String>,
}

async fn feedback(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: FeedbackRequest = parse_body(&body)?;
    let script = parse_script("script_dot", &req.script_dot)?;
    if req.feedback.trim().is_empty() {
        return Err(ApiError::bad_request("feedback must be non-empty"));
    }
    let edit = match req.edit.as_deref().map(str::trim).filter(|e| !e.is_empty()) {
        Some(text) => {
            let edit = parse_edit(text).map_err(ApiError::edit)?;
            apply(&script, &edit)
                .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "inapplicable_edit", e))?;
            Some(edit)
        }
        None => None,
    };
    let st = state.clone();
    let id = blocking(move || st.memory.write(&script, &req.feedback, edit)).await??;
    let body = json!({ "record_id": id, "memory_size": state.memory.len() });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

#[derive(Serialize)]
struct RecordView {
    id: u64,
    source_dot: String,
    goal: String,
    feedback: String,
    gold_edit: Option<EditCommand>,
    created_at: chrono::DateTime<chrono::Utc>,
    backend: String,
}

impl From<MemoryRecord> for RecordView {
    fn from(r: MemoryRecord) -> Self {
        RecordView {
            id: r.id,
            source_dot: r.source_script.to_dot(),
            goal: r.source_script.goal().to_owned(),
            feedback: r.feedback,
            gold_edit: r.gold_edit,
            created_at: r.created_at,
            backend: r.backend,
        }
    }
}

#[derive(Serialize)]
struct MatchView {
    similarity: f64,
    #[serde(flatten)]
    record: RecordView,
}

impl From<LookupResult> for MatchView {
    fn from(h: LookupResult) -> Self {
        MatchView {
            similarity: h.similarity,
            record: h.record.into(),
        }
    }
}

#[derive(Deserialize)]
struct MemoryQuery {
    query_dot: Option<String>,
    k: Option<usize>,
    offset: Option<usize>,
    limit: Option<usize>,
}

async fn memory_list(
    State(state): State<Arc<AppState>>,
    query: Result<Query<MemoryQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Value> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let total = state.memory.len();
    match q.query_dot {
        Some(dot) => {
            let script = parse_script("query_dot", &dot)?;
            let k = q.k.unwrap_or(DEFAULT_K).min(MAX_LIMIT);
            let st = state.clone();
            let hits = blocking(move || st.memory.lookup_k(&script, k)).await??;
            let matches: Vec<MatchView> = hits.into_iter().map(MatchView::from).collect();
            Ok(Json(json!({ "matches": matches, "total": total })))
        }
        None => {
            let offset = q.offset.unwrap_or(0);
            let limit = q.limit.unwrap_or(DEFAULT_LIMIT).min(MAX_LIMIT);
            let records: Vec<RecordView> = state.memory.records(offset, limit).into_iter().map(RecordView::from).collect();
            Ok(Json(json!({ "records": records, "offset": offset, "limit": limit, "total": total })))
        }
    }
}

async fn memory_get(
    State(state): State<Arc<AppState>>,
    id: Result<Path<u64>, axum::extract::rejection::PathRejection>,
) -> ApiResult<RecordView> {
    let Path(id) = id.map_err(|e| ApiError::bad_request(e.body_text()))?;
    state
        .memory
        .get(id)
        .map(|r| Json(r.into()))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no memory record {id}")))
}

async fn healthz(State(state): State<Arc<AppState>>) -> ApiResult<Value> {
    let st = state.clone();
    let probe = blocking(move || st.memory.embedder().embed_texts(&["healthz".to_owned()])).await?;
    let reachable = probe.is_ok();
    let mut body = json!({
        "status": if reachable { "ok" } else { "degraded" },
        "memory_size": state.memory.len(),
        "backend": state.memory.backend(),
        "backend_reachable": reachable,
        "threshold": state.config.threshold,
        "default_corrector": state.config.default_corrector,
        "correctors": state.correctors.keys().collect::<Vec<_>>(),
        "dataset_size": state.dataset.len(),
    });
    if let Err(e) = probe {
        body["backend_error"] = json!(e.to_string());
    }
    Ok(Json(body))
}

#[derive(Deserialize)]
struct DatasetQuery {
    offset: Option<usize>,
    limit: Option<usize>,
    split: Option<String>,
}

fn tuple_json(t: &EvalTuple) -> Value {
    serde_json::from_str(&dataset::to_jsonl_line(t)).expect("tuple line is JSON")
}

async fn dataset_list(
    State(state): State<Arc<AppState>>,
    query: Result<Query<DatasetQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Value> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let split = match q.split.as_deref() {
        Some(s) => Some(s.parse::<dataset::Split>().map_err(ApiError::bad_request)?),
        None => None,
    };
    let selected: Vec<&EvalTuple> = state.dataset.iter().filter(|t| split.is_none_or(|s| t.split == s)).collect();
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(DEFAULT_LIMIT).min(MAX_LIMIT);
    let tuples: Vec<Value> = selected.iter().skip(offset).take(limit).map(|t| tuple_json(t)).collect();
    Ok(Json(json!({ "tuples": tuples, "offset": offset, "limit": limit, "total": selected.len() })))
}

async fn dataset_get(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Value> {
    state
        .dataset
        .iter()
        .find(|t| t.id == id)
        .map(|t| Json(tuple_json(t)))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no tuple `{id}`")))
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = state.config.cors;
    let router = Router::new()
        .route("/repair", post(repair))
        .route("/feedback", post(feedback))
        .route("/memory", get(memory_list))
        .route("/memory/{id}", get(memory_get))
        .route("/healthz", get(healthz))
        .route("/dataset", get(dataset_list))
        .route("/dataset/{id}", get(dataset_get))
        .with_state(state);
    if cors {
        router.layer(tower_http::cors::CorsLayer::permissive())
    } else {
        router
    }
}

async fn bind(addr: &str) -> Result<TcpListener, ServiceError> {
    TcpListener::bind(addr).await.map_err(|source| ServiceError::Bind {
        addr: addr.to_owned(),
        source,
    })
}

/// Serves on `config.listen` until Ctrl-C.
pub async fn serve(config: Config) -> Result<(), ServiceError> {
    let listener = bind(&config.listen).await?;
    let state = Arc::new(AppState::from_config(config)?);
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// A service running on a background thread; stops when dropped.
pub struct RunningService {
    addr: SocketAddr,
    state: Arc<AppState>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningService {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn state(&self) -> &Arc<AppState> {
        &self.state
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Starts the service for `state` on `addr` (use port 0 for an ephemeral
/// port) on its own runtime thread.
pub fn spawn(state: AppState, addr: &str) -> Result<RunningService, ServiceError> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = runtime.block_on(bind(addr))?;
    let local = listener.local_addr()?;
    let state = Arc::new(state);
    let app = router(state.clone());
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(RunningService {
        addr: local,
        state,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
