use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::log::{write_ndjson, DateRange};
use super::questions::Answers;
use super::service::StudyService;
use super::StudyError;
use crate::net::ServerHandle;

impl IntoResponse for StudyError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            StudyError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            StudyError::IllegalTransition { .. } => (StatusCode::CONFLICT, "illegal_transition"),
            StudyError::WrongState(_) => (StatusCode::CONFLICT, "wrong_state"),
            StudyError::DuplicateResponse => (StatusCode::CONFLICT, "duplicate_response"),
            StudyError::JobAlreadyRunning => (StatusCode::CONFLICT, "job_already_running"),
            StudyError::InvalidAnswer(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_answer"),
            StudyError::UnknownRank(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_rank"),
            StudyError::InvalidRequest(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_request"),
            StudyError::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let mut body = json!({ "error": code, "message": self.to_string() });
        if let StudyError::InvalidAnswer(q) = &self {
            body["question_id"] = json!(q);
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, StudyError>;

#[derive(Deserialize)]
struct UsernameBody {
    username: String,
    market: Option<String>,
}

#[derive(Deserialize)]
struct TrackBody {
    rank: usize,
    answers: Answers,
}

#[derive(Deserialize)]
struct GlobalBody {
    answers: Answers,
}

#[derive(Deserialize)]
struct ExportQuery {
    from: Option<u64>,
    to: Option<u64>,
}

async fn create(State(s): State<StudyService>) -> ApiResult<impl IntoResponse> {
    let id = s.create_session()?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

async fn consent(State(s): State<StudyService>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let state = s.consent(&id)?;
    Ok(Json(json!({ "state": state.name() })))
}

async fn username(
    State(s): State<StudyService>,
    Path(id): Path<String>,
    Json(body): Json<UsernameBody>,
) -> ApiResult<impl IntoResponse> {
    let job = s.submit_username(&id, &body.username, body.market.as_deref())?;
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn status(State(s): State<StudyService>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.status(&id)?))
}

async fn items(State(s): State<StudyService>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.items(&id)?))
}

async fn track_response(
    State(s): State<StudyService>,
    Path(id): Path<String>,
    Json(body): Json<TrackBody>,
) -> ApiResult<impl IntoResponse> {
    let state = s.record_track_response(&id, body.rank, body.answers)?;
    Ok(Json(json!({ "state": state.name() })))
}

async fn global_response(
    State(s): State<StudyService>,
    Path(id): Path<String>,
    Json(body): Json<GlobalBody>,
) -> ApiResult<impl IntoResponse> {
    let state = s.record_global_response(&id, body.answers)?;
    Ok(Json(json!({ "state": state.name() })))
}

async fn export(
    State(s): State<StudyService>,
    headers: HeaderMap,
    Query(q): Query<ExportQuery>,
) -> ApiResult<impl IntoResponse> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    let records = s.export(token, DateRange { from: q.from, to: q.to })?;
    let mut body = Vec::new();
    write_ndjson(&mut body, &records)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body))
}

async fn healthz() -> &'static str {
    "ok"
}

/// The study HTTP API.
pub fn router(service: StudyService) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/api/sessions", post(create))
        .route("/api/sessions/{id}/consent", post(consent))
        .route("/api/sessions/{id}/username", post(username))
        .route("/api/sessions/{id}/status", get(status))
        .route("/api/sessions/{id}/items", get(items))
        .route("/api/sessions/{id}/responses/track", post(track_response))
        .route("/api/sessions/{id}/responses/global", post(global_response))
        .route("/api/export", get(export))
        .with_state(service)
}

/// Serves the API on `bind` (for example `127.0.0.1:8080`; port 0 picks a
/// free port).
pub async fn serve(service: StudyService, bind: &str) -> std::io::Result<ServerHandle> {
    let handle = ServerHandle::spawn(router(service), bind).await?;
    tracing::info!(addr = %handle.addr(), "study service listening");
    Ok(handle)
}
