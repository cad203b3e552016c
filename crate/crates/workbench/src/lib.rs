//! HTTP front of the post-editing store.
//!
//! Routes (JSON everywhere):
//! - `GET  /api/next?annotator=ID`
//! - `GET  /api/items/{id}`
//! - `POST /api/items/{id}/edit`
//! - `GET  /api/progress[?strategy=..&role=..]`
//! - `GET  /api/guidelines/{strategy}`
//!
//! Anything else falls through to the static UI bundle when one is mounted.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use counterkit::workbench::{ProgressFilter, SubmitEdit, Workbench, WorkbenchError};
use counterkit::{AnnotatorRole, Strategy};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

#[derive(Clone)]
pub struct AppState {
    pub workbench: Arc<Workbench>,
    /// Required `Authorization: Bearer` value for `/api` routes, if any.
    pub token: Option<String>,
}

/// JSON error body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

pub struct HttpError {
    status: StatusCode,
    body: ApiError,
}

impl HttpError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        HttpError { status, body: ApiError { error: code.into(), message: message.into(), detail: None } }
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<WorkbenchError> for HttpError {
    fn from(e: WorkbenchError) -> Self {
        let message = e.to_string();
        let (status, code) = match &e {
            WorkbenchError::UnknownAnnotator(_) => (StatusCode::NOT_FOUND, "unknown_annotator"),
            WorkbenchError::UnknownItem(_) => (StatusCode::NOT_FOUND, "unknown_item"),
            WorkbenchError::RoleConflict(_) => (StatusCode::CONFLICT, "role_conflict"),
            WorkbenchError::NoEligible { .. } => (StatusCode::CONFLICT, "no_eligible_items"),
            WorkbenchError::NothingLeft => (StatusCode::CONFLICT, "no_items_left"),
            WorkbenchError::NotHeld { .. } => (StatusCode::CONFLICT, "not_held"),
            WorkbenchError::Duplicate(_) => (StatusCode::CONFLICT, "duplicate_submission"),
            WorkbenchError::EmptyEdit => (StatusCode::UNPROCESSABLE_ENTITY, "empty_edit"),
            WorkbenchError::SpanOutOfBounds { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "span_out_of_bounds"),
            WorkbenchError::UnknownDocument { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_document"),
            WorkbenchError::Corpus(_) => (StatusCode::INTERNAL_SERVER_ERROR, "persistence_failed"),
        };
        let mut err = HttpError::new(status, code, message);
        if let WorkbenchError::SpanOutOfBounds { doc_id, start, end, len } = e {
            err.body.detail = Some(serde_json::json!({"doc_id": doc_id, "start": start, "end": end, "len": len}));
        }
        err
    }
}

type ApiResult<T> = Result<Json<T>, HttpError>;

/// Run a store call off the async executor; the store locks and writes files.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, WorkbenchError> + Send + 'static,
) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json).map_err(HttpError::from),
        Err(e) => Err(HttpError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

async fn next_item(State(st): State<AppState>, Query(q): Query<NextQuery>) -> impl IntoResponse {
    let Some(annotator) = q.annotator.filter(|a| !a.is_empty()) else {
        return Err(HttpError::new(StatusCode::BAD_REQUEST, "bad_request", "missing annotator query parameter"));
    };
    let wb = st.workbench.clone();
    blocking(move || wb.next_item(&annotator)).await
}

async fn get_item(State(st): State<AppState>, Path(id): Path<String>) -> impl IntoResponse {
    let wb = st.workbench.clone();
    blocking(move || wb.get_item(&id)).await
}

async fn submit_edit(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<SubmitEdit>, axum::extract::rejection::JsonRejection>,
) -> impl IntoResponse {
    let Json(edit) = body.map_err(|e| HttpError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
    let wb = st.workbench.clone();
    blocking(move || wb.submit_edit(&id, edit)).await
}

#[derive(Deserialize)]
struct ProgressQuery {
    strategy: Option<String>,
    role: Option<String>,
}

async fn progress(State(st): State<AppState>, Query(q): Query<ProgressQuery>) -> impl IntoResponse {
    let bad = |m: String| HttpError::new(StatusCode::BAD_REQUEST, "bad_request", m);
    let filter = ProgressFilter {
        strategy: q.strategy.map(|s| s.parse::<Strategy>()).transpose().map_err(bad)?,
        role: q.role.map(|r| r.parse::<AnnotatorRole>()).transpose().map_err(bad)?,
    };
    let wb = st.workbench.clone();
    blocking(move || Ok(wb.progress(&filter))).await
}

async fn guidelines(State(st): State<AppState>, Path(strategy): Path<String>) -> impl IntoResponse {
    let s: Strategy = strategy
        .parse()
        .map_err(|m: String| HttpError::new(StatusCode::BAD_REQUEST, "bad_request", m))?;
    Ok::<_, HttpError>(Json(st.workbench.guidelines(s)))
}

async fn require_token(State(st): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return HttpError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

async fn api_not_found() -> HttpError {
    HttpError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

/// Build the application router; `static_dir` serves the UI bundle at `/`.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/next", get(next_item))
        .route("/items/{id}", get(get_item))
        .route("/items/{id}/edit", post(submit_edit))
        .route("/progress", get(progress))
        .route("/guidelines/{strategy}", get(guidelines))
        .fallback(api_not_found)
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);
    let app = Router::new().nest("/api", api);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// Bind and serve until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state, static_dir)).await
}
