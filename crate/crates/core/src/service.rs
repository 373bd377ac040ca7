//! HTTP API over the engine, the store and image search.
//!
//! | route | body | reply |
//! |---|---|---|
//! | `GET /api/health` | | `{status, documents}` |
//! | `POST /api/chat` | `{query, mode?, temperature?, session_id?, k?, stream?}` | `ChatAnswer`, or SSE when streaming |
//! | `POST /api/search/text` | `{query, k?, measure?, kind?}` | hits with chunk previews |
//! | `POST /api/search/image` | multipart `image`, `image_id`, `measure`, `k`, `exclude_group`, `exclude_same_group` | hits with thumbnails |
//! | `GET /api/documents` | | document list |
//! | `GET /api/chunks/:id` | | chunk with source |
//! | `POST /api/ingest` | TEI XML | ingest outcome |
//!
//! Errors are `{code, message, detail}` with status 400, 404, 502 or 503.

use std::convert::Infallible;
use std::io::Cursor;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio_stream::wrappers::ReceiverStream;
use tower_http::services::ServeDir;

use crate::chat::{ChatEngine, ChatError, QueryOptions};
use crate::embed::{EmbedError, ImageEmbedder};
use crate::images::{search_images, ImageError, ImageQuery, ImageSearchParams};
use crate::ingest::{ChunkId, ChunkKind, IngestError};
use crate::pipeline::{Pipeline, PipelineError};
use crate::prompt::ContextMode;
use crate::retrieval::SimilarityMeasure;
use crate::store::{CorpusStore, StoreError};

const PREVIEW_CHARS: usize = 240;
const THUMB_SIDE: u32 = 128;
const MAX_UPLOAD: usize = 64 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<ChatEngine>,
    pub pipeline: Arc<Pipeline>,
    pub images: Arc<dyn ImageEmbedder>,
}

impl AppState {
    fn store(&self) -> &Arc<dyn CorpusStore> {
        self.engine.store()
    }
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            detail: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    fn with_detail(mut self, detail: impl ToString) -> Self {
        self.detail = Some(detail.to_string());
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(what) => ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("{what} not found")),
            StoreError::Invalid(m) => ApiError::bad_request(m),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store_error", "storage failure").with_detail(other),
        }
    }
}

fn provider_error(e: impl ToString) -> ApiError {
    ApiError::new(StatusCode::BAD_GATEWAY, "provider_error", "upstream model provider failed").with_detail(e)
}

impl From<EmbedError> for ApiError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::InvalidInput { .. } => ApiError::bad_request(e.to_string()),
            other => provider_error(other),
        }
    }
}

impl From<ChatError> for ApiError {
    fn from(e: ChatError) -> Self {
        match e {
            ChatError::EmptyQuery => ApiError::bad_request("query must not be empty"),
            ChatError::Llm(crate::llm::LlmError::Temperature(t)) => {
                ApiError::bad_request(format!("temperature {t} is out of range"))
            }
            ChatError::Llm(e) => provider_error(e),
            ChatError::Embed(e) => e.into(),
            ChatError::Store(e) => e.into(),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl From<ImageError> for ApiError {
    fn from(e: ImageError) -> Self {
        match e {
            ImageError::Store(e) => e.into(),
            ImageError::Embed(EmbedError::Permanent { source, .. }) => {
                ApiError::bad_request("image could not be embedded").with_detail(source)
            }
            ImageError::Embed(e) => e.into(),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Ingest(e @ (IngestError::Malformed { .. } | IngestError::MissingBody | IngestError::EmptyTitle)) => {
                ApiError::bad_request("document could not be parsed").with_detail(e)
            }
            PipelineError::Embed(e) => e.into(),
            PipelineError::Store(e) => e.into(),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

fn join_error(e: tokio::task::JoinError) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "worker failed").with_detail(e)
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(join_error)?
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/chat", post(chat))
        .route("/api/search/text", post(search_text))
        .route("/api/search/image", post(search_image))
        .route("/api/documents", get(documents))
        .route("/api/chunks/:id", get(chunk))
        .route("/api/ingest", post(ingest))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Bind `addr` and serve until Ctrl-C, letting in-flight requests finish.
pub async fn serve(addr: SocketAddr, state: AppState, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await
}

async fn health(State(s): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let n = blocking(move || Ok(s.store().document_count()?)).await?;
    Ok(Json(json!({ "status": "ok", "documents": n })))
}

#[derive(Debug, Clone, Deserialize)]
pub struct ChatRequest {
    pub query: String,
    #[serde(default)]
    pub mode: Option<ContextMode>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub session_id: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub stream: bool,
}

fn wants_stream(req: &ChatRequest, headers: &HeaderMap) -> bool {
    req.stream
        || headers
            .get(axum::http::header::ACCEPT)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v.contains("text/event-stream"))
}

async fn chat(State(s): State<AppState>, headers: HeaderMap, Json(req): Json<ChatRequest>) -> Result<Response, ApiError> {
    if req.query.trim().is_empty() {
        return Err(ApiError::bad_request("query must not be empty"));
    }
    let opts = QueryOptions {
        k_cap: req.k,
        mode: req.mode,
        temperature: req.temperature,
    };
    let mode = req.mode.unwrap_or(s.engine.config().mode);
    if mode.kinds().iter().all(|k| s.engine.matrix(*k).is_empty()) {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "corpus_empty",
            "no documents have been ingested for this mode",
        ));
    }

    if !wants_stream(&req, &headers) {
        let answer = blocking(move || {
            Ok(match &req.session_id {
                Some(id) => s.engine.answer_in_session(id, &req.query, &opts)?,
                None => s.engine.answer(&req.query, &opts, &[])?,
            })
        })
        .await?;
        return Ok(Json(answer).into_response());
    }

    let (tx, rx) = tokio::sync::mpsc::channel::<Result<Event, Infallible>>(64);
    tokio::task::spawn_blocking(move || {
        let history = req
            .session_id
            .as_deref()
            .map(|id| s.engine.session(id).turns().to_vec())
            .unwrap_or_default();
        let delta_tx = tx.clone();
        let mut on_delta = |d: &str| {
            let _ = delta_tx.blocking_send(Ok(Event::default().event("delta").data(d)));
        };
        let done = match s.engine.answer_streaming(&req.query, &opts, &history, &mut on_delta) {
            Ok(answer) => {
                if let Some(id) = &req.session_id {
                    s.engine.record_turn(id, &req.query, &answer.response_text);
                }
                Event::default().event("answer").json_data(&answer)
            }
            Err(e) => Event::default().event("error").json_data(ApiError::from(e)),
        };
        if let Ok(ev) = done {
            let _ = tx.blocking_send(Ok(ev));
        }
    });
    Ok(Sse::new(ReceiverStream::new(rx)).into_response())
}

#[derive(Debug, Clone, Deserialize)]
pub struct TextSearchRequest {
    pub query: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub measure: SimilarityMeasure,
    #[serde(default = "default_kind")]
    pub kind: ChunkKind,
}

fn default_k() -> usize {
    10
}

fn default_kind() -> ChunkKind {
    ChunkKind::Raw
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextSearchResult {
    pub chunk_id: ChunkId,
    pub doc_id: String,
    pub display_name: String,
    pub kind: ChunkKind,
    pub score: f64,
    pub rank: usize,
    pub preview: String,
}

async fn search_text(
    State(s): State<AppState>,
    Json(req): Json<TextSearchRequest>,
) -> Result<Json<Vec<TextSearchResult>>, ApiError> {
    if req.query.trim().is_empty() {
        return Err(ApiError::bad_request("query must not be empty"));
    }
    let hits = blocking(move || Ok(s.engine.search_text(&req.query, req.k, req.measure, req.kind)?)).await?;
    Ok(Json(
        hits.into_iter()
            .map(|h| TextSearchResult {
                chunk_id: h.chunk.chunk.chunk_id,
                doc_id: h.chunk.chunk.doc_id.to_string(),
                display_name: h.chunk.display_name,
                kind: h.chunk.chunk.kind,
                score: h.hit.score,
                rank: h.hit.rank,
                preview: h.chunk.chunk.raw_text.chars().take(PREVIEW_CHARS).collect(),
            })
            .collect(),
    ))
}

#[derive(Default)]
struct ImageForm {
    image: Option<(String, Vec<u8>)>,
    image_id: Option<u64>,
    measure: Option<SimilarityMeasure>,
    k: Option<usize>,
    exclude_group: Option<String>,
    exclude_same_group: bool,
}

async fn read_image_form(mut mp: Multipart) -> Result<ImageForm, ApiError> {
    let bad = |e: &dyn std::fmt::Display| ApiError::bad_request("malformed multipart body").with_detail(e);
    let mut form = ImageForm::default();
    while let Some(field) = mp.next_field().await.map_err(|e| bad(&e))? {
        let name = field.name().unwrap_or("").to_string();
        if name == "image" {
            let file = field.file_name().unwrap_or("upload").to_string();
            let bytes = field.bytes().await.map_err(|e| bad(&e))?;
            form.image = Some((file, bytes.to_vec()));
            continue;
        }
        let text = field.text().await.map_err(|e| bad(&e))?;
        let text = text.trim();
        match name.as_str() {
            "image_id" => form.image_id = Some(text.parse().map_err(|e| bad(&e))?),
            "measure" => form.measure = Some(text.parse().map_err(|e| bad(&e))?),
            "k" => form.k = Some(text.parse().map_err(|e| bad(&e))?),
            "exclude_group" if !text.is_empty() => form.exclude_group = Some(text.to_string()),
            "exclude_same_group" => form.exclude_same_group = matches!(text, "1" | "true" | "on"),
            _ => {}
        }
    }
    Ok(form)
}

/// Small PNG preview, base64 encoded. `None` when the file is unreadable.
fn thumbnail(path: &std::path::Path) -> Option<String> {
    let img = ::image::open(path).ok()?.thumbnail(THUMB_SIDE, THUMB_SIDE);
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ::image::ImageFormat::Png).ok()?;
    Some(base64::engine::general_purpose::STANDARD.encode(out.into_inner()))
}

async fn search_image(State(s): State<AppState>, mp: Multipart) -> Result<Json<serde_json::Value>, ApiError> {
    let form = read_image_form(mp).await?;
    let params = ImageSearchParams {
        measure: form.measure.unwrap_or(SimilarityMeasure::Euclidean),
        k: form.k.unwrap_or(5),
        exclude_same_group: form.exclude_same_group,
    };
    if form.image.is_none() && form.image_id.is_none() {
        return Err(ApiError::bad_request("send an image file or an image_id"));
    }
    let hits = blocking(move || {
        let query = match (&form.image, form.image_id) {
            (Some((name, bytes)), _) => ImageQuery::Bytes { name, bytes },
            (None, Some(id)) => ImageQuery::Stored(id),
            (None, None) => unreachable!(),
        };
        let hits = search_images(query, &params, form.exclude_group.as_deref(), s.images.as_ref(), s.store().as_ref())?;
        Ok(hits
            .into_iter()
            .map(|h| {
                let mut v = serde_json::to_value(&h).unwrap_or_default();
                v["thumbnail_png_base64"] = json!(thumbnail(&h.image.path));
                v
            })
            .collect::<Vec<_>>())
    })
    .await?;
    Ok(Json(json!(hits)))
}

async fn documents(State(s): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let docs = blocking(move || Ok(s.store().documents()?)).await?;
    Ok(Json(json!(docs)))
}

async fn chunk(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let id: u64 = id
        .parse()
        .map_err(|_| ApiError::bad_request(format!("chunk id {id:?} is not a number")))?;
    let mut found = blocking(move || Ok(s.store().fetch_chunks(&[ChunkId(id)])?)).await?;
    match found.pop() {
        Some(c) => Ok(Json(json!(c))),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("chunk {id} not found"))),
    }
}

async fn ingest(State(s): State<AppState>, body: axum::body::Bytes) -> Result<Json<serde_json::Value>, ApiError> {
    if body.is_empty() {
        return Err(ApiError::bad_request("empty request body; send TEI XML"));
    }
    let outcome = blocking(move || {
        let out = s.pipeline.ingest_tei(&body, None)?;
        s.engine.refresh()?;
        Ok(out)
    })
    .await?;
    Ok(Json(json!(outcome)))
}
