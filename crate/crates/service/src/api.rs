//! HTTP routes.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::Serialize;
use serde_json::json;
use tokio::sync::broadcast;
use uuid::Uuid;
use vst_core::review::{ReviewAction, ReviewError};

use crate::service::{Service, ServiceError, SubmissionMeta};
use crate::session::Lifecycle;
use crate::store::StatusView;

/// Uploads larger than this are refused.
pub const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/sessions", post(create))
        .route("/api/sessions/{id}", get(status))
        .route("/api/sessions/{id}/events", get(events))
        .route("/api/sessions/{id}/results", get(results))
        .route("/api/sessions/{id}/chunks/{n}/audio", get(chunk_audio))
        .route("/api/sessions/{id}/upgrade", post(upgrade))
        .route("/api/sessions/{id}/review", post(review))
        .route("/api/sessions/{id}/export", get(export))
        .route("/healthz", get(|| async { "ok" }))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(service)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    detail: String,
}

impl ApiError {
    fn bad_request(detail: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, code: "bad_request", detail: detail.into() }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let detail = e.to_string();
        let (status, code) = match &e {
            ServiceError::BadAudio(_) => (StatusCode::UNPROCESSABLE_ENTITY, "bad_audio"),
            ServiceError::BadConfig(_) => (StatusCode::UNPROCESSABLE_ENTITY, "bad_config"),
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::InvalidState(_) => (StatusCode::CONFLICT, "invalid_state"),
            ServiceError::ChunkOutOfRange { .. } => (StatusCode::NOT_FOUND, "chunk_out_of_range"),
            ServiceError::Review(ReviewError::MissingFeedback) => (StatusCode::UNPROCESSABLE_ENTITY, "missing_feedback"),
            ServiceError::Review(ReviewError::PlanInvalid(_)) => (StatusCode::UNPROCESSABLE_ENTITY, "plan_invalid"),
            ServiceError::Review(ReviewError::InvalidAction(_)) => (StatusCode::CONFLICT, "invalid_action"),
            ServiceError::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        Self { status, code, detail }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "detail": self.detail }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_id(raw: &str) -> ApiResult<Uuid> {
    Uuid::parse_str(raw).map_err(|_| ApiError {
        status: StatusCode::NOT_FOUND,
        code: "not_found",
        detail: format!("{raw} is not a session id"),
    })
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Created {
    session_id: Uuid,
}

async fn create(State(svc): State<Arc<Service>>, mut form: Multipart) -> ApiResult<(StatusCode, Json<Created>)> {
    let mut meta: Option<SubmissionMeta> = None;
    let mut audio: Option<Vec<u8>> = None;
    while let Some(field) = form.next_field().await.map_err(|e| ApiError::bad_request(e.to_string()))? {
        match field.name() {
            Some("metadata") => {
                let raw = field.bytes().await.map_err(|e| ApiError::bad_request(e.to_string()))?;
                meta = Some(
                    serde_json::from_slice(&raw)
                        .map_err(|e| ApiError::from(ServiceError::BadConfig(format!("metadata: {e}"))))?,
                );
            }
            Some("audio") => {
                audio = Some(field.bytes().await.map_err(|e| ApiError::bad_request(e.to_string()))?.to_vec());
            }
            _ => {}
        }
    }
    let meta = meta.ok_or_else(|| ApiError::bad_request("missing metadata field"))?;
    let audio = audio.ok_or_else(|| ApiError::bad_request("missing audio field"))?;
    let session_id = svc.submit(meta, &audio)?;
    Ok((StatusCode::ACCEPTED, Json(Created { session_id })))
}

async fn status(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<StatusView>> {
    let record = svc.store().get(parse_id(&id)?).map_err(ServiceError::from)?;
    Ok(Json(StatusView::of(&record)))
}

/// Nothing further will happen without a new request.
fn settled(l: &Lifecycle) -> bool {
    !l.is_busy()
}

async fn events(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let (first, rx) = svc.store().subscribe(parse_id(&id)?).map_err(ServiceError::from)?;
    let stream = stream::unfold((Some(first), Some(rx)), |(pending, rx)| async move {
        if let Some(view) = pending {
            let rx = if settled(&view.lifecycle) { None } else { rx };
            return Some((view, (None, rx)));
        }
        let mut rx = rx?;
        loop {
            match rx.recv().await {
                Ok(view) => {
                    let next = if settled(&view.lifecycle) { None } else { Some(rx) };
                    return Some((view, (None, next)));
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    let stream = futures::StreamExt::map(stream, |view| {
        Ok(Event::default().event("status").json_data(&view).unwrap_or_else(|_| Event::default()))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}

async fn results(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Response> {
    let doc = svc.results(parse_id(&id)?)?;
    Ok(Json(doc).into_response())
}

async fn chunk_audio(
    State(svc): State<Arc<Service>>,
    Path((id, n)): Path<(String, String)>,
) -> ApiResult<Response> {
    let id = parse_id(&id)?;
    let n: usize = n.parse().map_err(|_| ApiError::bad_request(format!("bad chunk index {n}")))?;
    let wav = svc.chunk_audio(id, n)?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], wav).into_response())
}

async fn upgrade(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let id = parse_id(&id)?;
    let lifecycle = svc.upgrade(id)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "sessionId": id, "lifecycle": lifecycle }))))
}

async fn review(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    body: Result<Json<ReviewAction>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let id = parse_id(&id)?;
    let Json(action) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let lifecycle = svc.review(id, action)?;
    Ok(Json(json!({ "lifecycle": lifecycle })))
}

async fn export(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Html<String>> {
    Ok(Html(svc.export_html(parse_id(&id)?)?))
}
