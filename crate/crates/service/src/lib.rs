//! HTTP/JSON front end for fastmks.
//!
//! Every workflow (generate, build, run, bench, diagnose) is a POST taking
//! and returning the types in [`fastmks_api`]. Long-lived indexes can also
//! be held in memory and searched by id, so many clients share one build.
//! CPU-bound work runs on the blocking pool.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fastmks::cover_tree::CoverTree;
use fastmks::run;
use fastmks::search::{Mode, SearchConfig};
use fastmks_api as api;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

#[derive(Debug)]
pub enum ApiError {
    Core(fastmks::Error),
    BadRequest(String),
    NotFound(String),
    Internal(String),
}

impl From<fastmks::Error> for ApiError {
    fn from(e: fastmks::Error) -> Self {
        ApiError::Core(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::BadRequest(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, error) = match self {
            ApiError::Core(e) => {
                let status = match &e {
                    fastmks::Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => StatusCode::NOT_FOUND,
                    fastmks::Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
                    _ => StatusCode::UNPROCESSABLE_ENTITY,
                };
                (status, e.kind().to_string(), e.to_string())
            }
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "bad_request".into(), m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, "not_found".into(), m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal".into(), m),
        };
        if status.is_server_error() {
            tracing::error!(%kind, %error, "request failed");
        }
        (status, Json(api::ErrorBody { kind, error })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

struct Session {
    info: api::IndexInfo,
    tree: Arc<CoverTree>,
}

#[derive(Default)]
pub struct AppState {
    indexes: RwLock<BTreeMap<u64, Session>>,
    next_id: AtomicU64,
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> fastmks::Result<T> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(e.to_string()))?.map_err(ApiError::from)
}

pub fn router() -> Router {
    router_with_state(Arc::new(AppState::default()))
}

pub fn router_with_state(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/generate", post(generate))
        .route("/v1/build", post(build))
        .route("/v1/run", post(run_batch))
        .route("/v1/bench", post(bench))
        .route("/v1/diagnose", post(diagnose))
        .route("/v1/indexes", post(create_index).get(list_indexes))
        .route("/v1/indexes/{id}", get(get_index).delete(delete_index))
        .route("/v1/indexes/{id}/search", post(search))
        .with_state(state)
}

async fn health() -> Json<api::Health> {
    Json(api::Health { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into() })
}

async fn generate(body: Result<Json<api::GenerateRequest>, JsonRejection>) -> ApiResult<api::GenerateResponse> {
    let Json(req) = body?;
    Ok(Json(blocking(move || run::generate_file(&req)).await?))
}

async fn build(body: Result<Json<api::BuildSpec>, JsonRejection>) -> ApiResult<api::BuildReport> {
    let Json(spec) = body?;
    Ok(Json(blocking(move || run::build(&spec)).await?))
}

async fn run_batch(body: Result<Json<api::RunSpec>, JsonRejection>) -> ApiResult<api::RunReport> {
    let Json(spec) = body?;
    Ok(Json(blocking(move || run::run(&spec)).await?))
}

async fn bench(body: Result<Json<api::BenchSpec>, JsonRejection>) -> ApiResult<api::BenchReport> {
    let Json(spec) = body?;
    Ok(Json(blocking(move || run::bench(&spec)).await?))
}

async fn diagnose(body: Result<Json<api::DiagnoseSpec>, JsonRejection>) -> ApiResult<api::HardnessReport> {
    let Json(spec) = body?;
    Ok(Json(blocking(move || run::diagnose(&spec)).await?))
}

async fn create_index(
    State(state): State<Arc<AppState>>,
    body: Result<Json<api::CreateIndexRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<api::IndexInfo>), ApiError> {
    let Json(req) = body?;
    let tree = blocking(move || {
        let kernel = req.kernel.parse()?;
        run::open_tree(run::resolve(&req.reference)?, kernel, req.base, req.index.as_deref())
    })
    .await?;
    let id = state.next_id.fetch_add(1, Ordering::Relaxed) + 1;
    let info = api::IndexInfo {
        id,
        kernel: tree.kernel().to_string(),
        base: tree.base(),
        dataset: run::dataset_info(tree.dataset()),
        tree: run::tree_summary(&tree.stats()),
    };
    let session = Session { info: info.clone(), tree: Arc::new(tree) };
    state.indexes.write().expect("index table poisoned").insert(id, session);
    tracing::info!(id, n = info.dataset.n, kernel = %info.kernel, "index created");
    Ok((StatusCode::CREATED, Json(info)))
}

async fn list_indexes(State(state): State<Arc<AppState>>) -> Json<Vec<api::IndexInfo>> {
    Json(state.indexes.read().expect("index table poisoned").values().map(|s| s.info.clone()).collect())
}

fn missing(id: u64) -> ApiError {
    ApiError::NotFound(format!("no index with id {id}"))
}

async fn get_index(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<api::IndexInfo> {
    let table = state.indexes.read().expect("index table poisoned");
    table.get(&id).map(|s| Json(s.info.clone())).ok_or_else(|| missing(id))
}

async fn delete_index(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<StatusCode, ApiError> {
    let removed = state.indexes.write().expect("index table poisoned").remove(&id);
    removed.map(|_| StatusCode::NO_CONTENT).ok_or_else(|| missing(id))
}

async fn search(
    State(state): State<Arc<AppState>>,
    Path(id): Path<u64>,
    body: Result<Json<api::SearchRequest>, JsonRejection>,
) -> ApiResult<api::SearchResponse> {
    let Json(req) = body?;
    let tree = {
        let table = state.indexes.read().expect("index table poisoned");
        table.get(&id).map(|s| s.tree.clone()).ok_or_else(|| missing(id))?
    };
    let results = blocking(move || {
        let mode: Mode = req.mode.parse()?;
        let queries = run::inline_dataset(&req.queries)?;
        let found = run::search_batch(&tree, &queries, &SearchConfig::with_mode(req.k, mode))?;
        Ok(found.iter().enumerate().map(|(i, r)| run::query_record(i, r)).collect())
    })
    .await?;
    Ok(Json(api::SearchResponse { results }))
}

/// Serves on `listener` until `shutdown` resolves.
pub async fn serve(listener: TcpListener, shutdown: impl std::future::Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    axum::serve(listener, router()).with_graceful_shutdown(shutdown).await
}

/// Starts a server on `addr` in the background (port 0 picks a free port)
/// and returns the bound address.
pub async fn spawn(addr: SocketAddr) -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(async move { axum::serve(listener, router()).await });
    Ok((local, handle))
}
