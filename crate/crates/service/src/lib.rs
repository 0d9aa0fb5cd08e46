//! REST API over the annotation pipeline.
//!
//! Routes: `POST /plain`, `POST /pmid`, `GET /health`. Every error reply is a
//! JSON object `{"error": "..."}`.

pub mod api;

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bioann_core::ingest::{AbstractFetcher, FetcherConfig, HttpFetcher, IngestError};
use bioann_core::model::{is_valid_pmid, Document};
use bioann_core::normalizer::{EncoderError, NormalizeError};
use bioann_core::pipeline::{Pipeline, PipelineConfig, PipelineError};
use bioann_core::store::AnnotationStore;
use bioann_core::tagger::TaggerError;
use serde_json::Value;
use thiserror::Error;

pub use api::{ApiAnnotation, ApiResult, ApiSpan, ErrorBody, Health, ItemStatus, PmidItem, MAX_BATCH};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything needed to start the service.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub pipeline: PipelineConfig,
    pub store_path: PathBuf,
    pub fetcher: FetcherConfig,
}

/// Shared, read-only request state.
#[derive(Clone)]
pub struct AppState {
    pub pipeline: Arc<Pipeline>,
    pub store: Arc<AnnotationStore>,
    pub fetcher: Arc<dyn AbstractFetcher>,
}

impl AppState {
    pub fn new(pipeline: Pipeline, store: AnnotationStore, fetcher: Arc<dyn AbstractFetcher>) -> Self {
        Self {
            pipeline: Arc::new(pipeline),
            store: Arc::new(store),
            fetcher,
        }
    }

    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, PipelineError> {
        let pipeline = Pipeline::from_config(cfg.pipeline.clone())?;
        let store = AnnotationStore::open(&cfg.store_path)?;
        let fetcher = HttpFetcher::new(cfg.fetcher.clone())?;
        Ok(Self::new(pipeline, store, Arc::new(fetcher)))
    }
}

struct ApiError(StatusCode, String);

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        Self(StatusCode::BAD_REQUEST, msg.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::InputTooLarge { .. } | PipelineError::InvalidPmid(_) => StatusCode::BAD_REQUEST,
            PipelineError::Tagger(TaggerError::BackendUnavailable(_))
            | PipelineError::Normalize(NormalizeError::Encoder(EncoderError::Unavailable(_))) => {
                StatusCode::SERVICE_UNAVAILABLE
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self(status, e.to_string())
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))
}

fn json_body(body: Result<Bytes, BytesRejection>) -> Result<Value, ApiError> {
    let bytes = body.map_err(|e| ApiError(e.status(), e.body_text()))?;
    serde_json::from_slice(&bytes).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

async fn plain(State(st): State<AppState>, body: Result<Bytes, BytesRejection>) -> Result<Json<ApiResult>, ApiError> {
    let value = json_body(body)?;
    let Some(text) = value.get("text").and_then(Value::as_str) else {
        return Err(ApiError::bad_request("body must be an object with a string field \"text\""));
    };
    let doc = Document::plain(text);
    let pipeline = st.pipeline.clone();
    let result = blocking(move || pipeline.annotate_text(&doc)).await??;
    Ok(Json(ApiResult::from(&result)))
}

fn parse_pmids(value: &Value) -> Result<Vec<String>, ApiError> {
    let Some(list) = value.get("pmids").and_then(Value::as_array) else {
        return Err(ApiError::bad_request("body must be an object with an array field \"pmids\""));
    };
    if list.is_empty() || list.len() > MAX_BATCH {
        return Err(ApiError::bad_request(format!(
            "\"pmids\" must hold between 1 and {MAX_BATCH} items, got {}",
            list.len()
        )));
    }
    list.iter()
        .map(|v| match v.as_str() {
            Some(s) if is_valid_pmid(s) => Ok(s.to_string()),
            _ => Err(ApiError::bad_request(format!("invalid pmid {v}; expected a string of digits"))),
        })
        .collect()
}

fn pmid_item(st: &AppState, pmid: String) -> PmidItem {
    match st.pipeline.annotate_pmid(&pmid, &st.store, st.fetcher.as_ref()) {
        Ok(r) => PmidItem {
            pmid,
            status: ItemStatus::Ok,
            result: Some(ApiResult::from(&r)),
            error: None,
        },
        Err(e) => {
            let status = match e {
                PipelineError::Ingest(IngestError::PmidNotFound(_)) => ItemStatus::NotFound,
                _ => {
                    log::warn!("pmid {pmid}: {e}");
                    ItemStatus::Error
                }
            };
            PmidItem {
                pmid,
                status,
                result: None,
                error: Some(e.to_string()),
            }
        }
    }
}

async fn pmid(State(st): State<AppState>, body: Result<Bytes, BytesRejection>) -> Result<Json<Vec<PmidItem>>, ApiError> {
    let pmids = parse_pmids(&json_body(body)?)?;
    let items = blocking(move || pmids.into_iter().map(|p| pmid_item(&st, p)).collect()).await?;
    Ok(Json(items))
}

async fn health(State(st): State<AppState>) -> Result<Json<Health>, ApiError> {
    // a remote backend probe performs blocking I/O
    let p = st.pipeline.clone();
    let backend_ok = blocking(move || p.backend_ok()).await?;
    Ok(Json(Health {
        status: "ok".into(),
        pipeline_version: st.pipeline.version().to_string(),
        backend: st.pipeline.backend_kind().to_string(),
        backend_ok,
        cache_records: st.store.len(),
    }))
}

async fn not_found() -> ApiError {
    ApiError(StatusCode::NOT_FOUND, "no such route".into())
}

async fn method_not_allowed() -> ApiError {
    ApiError(StatusCode::METHOD_NOT_ALLOWED, "method not allowed".into())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/plain", post(plain))
        .route("/pmid", post(pmid))
        .route("/health", get(health))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    log::info!("shutting down");
}

/// Binds `addr` and serves until a shutdown signal.
pub async fn run(addr: &str, state: AppState) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| ServiceError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    log::info!("listening on {}", listener.local_addr()?);
    serve(listener, state, shutdown_signal()).await
}
