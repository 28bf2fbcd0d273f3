//! HTTP routes.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use inker_core::pipeline::Stage;
use inker_core::socratic::{SessionError, SessionState};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::app::{AppState, Engines, LoadError};
use crate::records::{
    AnalysisRecord, EssayComment, EssayRecord, JobStatus, MessageResponse, Mode, SessionView,
};
use crate::store::{RecordKind, StoreError};

pub const SECRET_HEADER: &str = "x-inker-secret";

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub stage: Option<Stage>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            stage: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn not_found(kind: RecordKind, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no {kind} with id {id}"))
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    fn upstream(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_GATEWAY, "provider_error", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({"code": self.code, "message": self.message});
        if let Some(stage) = self.stage {
            error["stage"] = json!(stage);
        }
        let mut response = (self.status, Json(json!({ "error": error }))).into_response();
        if self.status == StatusCode::TOO_MANY_REQUESTS {
            response.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from_static("1"));
        }
        response
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::BadId(id) => ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no record with id {id}")),
            other => {
                log::error!("{other}");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", other.to_string())
            }
        }
    }
}

impl From<LoadError> for ApiError {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Store(s) => s.into(),
            other => {
                log::error!("{other}");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", other.to_string())
            }
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Finished => ApiError::conflict("session is finished"),
            SessionError::EmptyMessage => ApiError::bad_request("message is empty"),
            SessionError::Degraded(_) | SessionError::Malformed(_) => ApiError::upstream(e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn body<T: DeserializeOwned>(raw: &Bytes) -> ApiResult<T> {
    if raw.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::bad_request("request body is empty"));
    }
    serde_json::from_slice(raw).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn load<T: DeserializeOwned>(state: &AppState, kind: RecordKind, id: &str) -> ApiResult<T> {
    state.load(kind, id)?.ok_or_else(|| ApiError::not_found(kind, id))
}

fn engines(state: &AppState) -> ApiResult<Arc<Engines>> {
    state
        .engines()
        .map_err(|reason| ApiError::upstream(format!("model provider unavailable: {reason}")))
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/essays", post(create_essay))
        .route("/essays/{id}", get(get_essay))
        .route("/essays/{id}/analyze", post(analyze))
        .route("/essays/{id}/comments", get(essay_comments))
        .route("/analyses/{id}", get(get_analysis))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/skip", post(skip_step))
        .route("/sessions/{id}/resume", post(resume_session))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_secret));
    Router::new()
        .route("/health", get(health))
        .merge(api)
        .with_state(state)
}

async fn require_secret(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    if let Some(secret) = &state.config.shared_secret {
        let given = request.headers().get(SECRET_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(secret.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", format!("missing or wrong {SECRET_HEADER} header"))
                .into_response();
        }
    }
    next.run(request).await
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "provider": state.engines().map(|e| e.pipeline.gateway().provider_name().to_string()).ok(),
        "jobs_in_flight": state.jobs_in_flight(),
    }))
}

#[derive(Deserialize)]
struct NewEssay {
    text: String,
}

async fn create_essay(State(state): State<Arc<AppState>>, raw: Bytes) -> ApiResult<(StatusCode, Json<EssayRecord>)> {
    let NewEssay { text } = body(&raw)?;
    if text.trim().is_empty() {
        return Err(ApiError::bad_request("essay text is empty"));
    }
    let chars = text.chars().count();
    let limit = state.config.max_essay_chars;
    if chars > limit {
        return Err(ApiError::bad_request(format!(
            "essay is {chars} characters; the limit is {limit}"
        )));
    }
    let record = EssayRecord {
        essay_id: uuid::Uuid::new_v4().to_string(),
        text,
        created_at: Utc::now(),
        latest_analysis_id: None,
    };
    state.save(RecordKind::Essay, &record.essay_id, &record)?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn get_essay(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<EssayRecord>> {
    load(&state, RecordKind::Essay, &id).map(Json)
}

#[derive(Deserialize)]
struct AnalyzeRequest {
    mode: Mode,
}

#[derive(Serialize)]
struct AnalyzeResponse {
    analysis_id: String,
    status: JobStatus,
    /// False when an identical job was already queued or running.
    created: bool,
}

async fn analyze(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    raw: Bytes,
) -> ApiResult<(StatusCode, Json<AnalyzeResponse>)> {
    let AnalyzeRequest { mode } = body(&raw)?;
    let mut essay: EssayRecord = load(&state, RecordKind::Essay, &id)?;
    let engines = engines(&state)?;
    let (record, created) = state.start_analysis(engines, &id, mode)?;
    if created {
        essay.latest_analysis_id = Some(record.analysis_id.clone());
        state.save(RecordKind::Essay, &id, &essay)?;
    }
    Ok((
        StatusCode::ACCEPTED,
        Json(AnalyzeResponse {
            analysis_id: record.analysis_id,
            status: record.status,
            created,
        }),
    ))
}

async fn get_analysis(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<AnalysisRecord>> {
    load(&state, RecordKind::Analysis, &id).map(Json)
}

#[derive(Deserialize)]
struct NewSession {
    analysis_id: String,
}

async fn create_session(State(state): State<Arc<AppState>>, raw: Bytes) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let NewSession { analysis_id } = body(&raw)?;
    let analysis: AnalysisRecord = load(&state, RecordKind::Analysis, &analysis_id)?;
    if analysis.mode != Mode::Socratic {
        return Err(ApiError::conflict("analysis was run in visual mode; sessions need socratic mode"));
    }
    let result = match (&analysis.status, analysis.result) {
        (JobStatus::Done, Some(result)) => result,
        (status, _) => {
            return Err(ApiError::conflict(format!(
                "analysis is {}; sessions need a finished analysis",
                serde_json::to_value(status).expect("plain enum").as_str().unwrap_or("?")
            )))
        }
    };
    let engines = engines(&state)?;
    let mut session = SessionState::new(
        uuid::Uuid::new_v4().to_string(),
        analysis.essay_id,
        analysis_id,
        result.essay,
        result.evaluated,
        result.plan,
    );
    // A failed opening leaves the session degraded; the client can call resume.
    if let Err(e) = engines.socratic.start(&mut session).await {
        log::warn!("session {} opened degraded: {e}", session.session_id);
    }
    state.save(RecordKind::Session, &session.session_id, &session)?;
    Ok((StatusCode::CREATED, Json(session.into())))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    load::<SessionState>(&state, RecordKind::Session, &id).map(|s| Json(s.into()))
}

/// Loads a session under its mutation lock, answering 429 while another
/// request holds the lock.
fn lock_session(state: &AppState, id: &str) -> ApiResult<(SessionState, tokio::sync::OwnedMutexGuard<()>)> {
    load::<SessionState>(state, RecordKind::Session, id)?;
    let guard = state.try_lock_session(id).ok_or_else(|| {
        ApiError::new(
            StatusCode::TOO_MANY_REQUESTS,
            "busy",
            "a previous message for this session is still being processed",
        )
    })?;
    let session = load(state, RecordKind::Session, id)?;
    Ok((session, guard))
}

#[derive(Deserialize)]
struct NewMessage {
    text: String,
}

async fn post_message(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    raw: Bytes,
) -> ApiResult<Json<MessageResponse>> {
    let (mut session, _guard) = lock_session(&state, &id)?;
    if session.finished {
        return Err(SessionError::Finished.into());
    }
    let NewMessage { text } = body(&raw)?;
    let engines = engines(&state)?;
    let outcome = engines.socratic.user_message(&mut session, &text).await?;
    state.save(RecordKind::Session, &id, &session)?;
    Ok(Json(MessageResponse {
        turns: outcome.turns,
        comment: outcome.comment,
        progress: outcome.progress.into(),
        finished: session.finished,
        current_focus: session.current_focus(),
        warnings: outcome.warnings,
    }))
}

async fn skip_step(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let (mut session, _guard) = lock_session(&state, &id)?;
    let engines = engines(&state)?;
    engines.socratic.skip(&mut session).await?;
    state.save(RecordKind::Session, &id, &session)?;
    Ok(Json(session.into()))
}

async fn resume_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let (mut session, _guard) = lock_session(&state, &id)?;
    if session.finished {
        return Err(SessionError::Finished.into());
    }
    if session.degraded.is_none() {
        return Err(ApiError::conflict("session is not degraded"));
    }
    let engines = engines(&state)?;
    let outcome = engines.socratic.resume(&mut session).await;
    // The degraded flag is worth keeping even when the retry fails.
    state.save(RecordKind::Session, &id, &session)?;
    outcome?;
    Ok(Json(session.into()))
}

#[derive(Serialize)]
struct CommentsResponse {
    essay_id: String,
    comments: Vec<EssayComment>,
}

async fn essay_comments(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<CommentsResponse>> {
    load::<EssayRecord>(&state, RecordKind::Essay, &id)?;
    let mut comments = Vec::new();
    for record in state.store().list(RecordKind::Session)? {
        let session: SessionState = serde_json::from_value(record.payload).map_err(|source| LoadError::Corrupt {
            kind: RecordKind::Session,
            id: record.id.clone(),
            source,
        })?;
        if session.essay_id != id {
            continue;
        }
        comments.extend(session.comments.into_iter().map(|comment| EssayComment {
            session_id: session.session_id.clone(),
            analysis_id: session.analysis_id.clone(),
            comment,
        }));
    }
    comments.sort_by_key(|c| c.comment.created_at);
    Ok(Json(CommentsResponse { essay_id: id, comments }))
}
