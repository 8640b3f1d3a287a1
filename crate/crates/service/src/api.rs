//! JSON API over the grader, plus static hosting of the web client.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use eipl_core::grader::{GradeError, Grader, QuestionProgress};
use eipl_core::model::{InstructionMode, SegmentLanguage, TestResult};
use eipl_core::{GradeAttempt, Verdict, VerdictKind};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

/// What a student sees of a question. Reference code and vectors stay server-side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub id: String,
    pub title: String,
    pub segment_language: SegmentLanguage,
    pub displayed_code: String,
    pub instruction_language_mode: InstructionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct SubmitBody {
    pub response_text: String,
    pub declared_language: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestView {
    pub index: usize,
    /// Both sides rendered as Python literals.
    pub expected: String,
    pub actual: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptView {
    pub attempt_number: u32,
    pub question_id: String,
    pub verdict: Verdict,
    pub generated_code: Option<String>,
    pub per_test: Vec<TestView>,
    pub attempts_remaining: u32,
    pub declared_language: Option<String>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressView {
    pub session_id: String,
    pub attempt_cap: u32,
    pub questions: BTreeMap<String, QuestionProgress>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self(status, ErrorBody { error: error.to_owned(), message: message.into() })
    }
}

impl From<GradeError> for ApiError {
    fn from(e: GradeError) -> Self {
        let (status, kind) = match &e {
            GradeError::UnknownQuestion(_) => (StatusCode::NOT_FOUND, "unknown_question"),
            GradeError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            GradeError::EmptyResponse => (StatusCode::UNPROCESSABLE_ENTITY, "empty_response"),
            GradeError::AlreadyCorrect => (StatusCode::CONFLICT, "already_correct"),
            GradeError::BackendUnavailable(_) => (StatusCode::SERVICE_UNAVAILABLE, "backend_unavailable"),
            GradeError::Storage(_) => (StatusCode::SERVICE_UNAVAILABLE, "storage_failure"),
            GradeError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status.is_server_error() {
            tracing::warn!(error = %e, "request failed");
        }
        Self::new(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn attempt_view(a: GradeAttempt, attempts_remaining: u32) -> AttemptView {
    let per_test = a
        .per_test
        .into_iter()
        .enumerate()
        .map(|(index, TestResult { expected, actual, passed })| TestView { index, expected: expected.to_string(), actual: actual.to_string(), passed })
        .collect();
    AttemptView {
        attempt_number: a.attempt_number,
        question_id: a.question_id,
        verdict: a.verdict,
        generated_code: a.extracted_code,
        per_test,
        attempts_remaining,
        declared_language: a.declared_language,
        timestamp: a.timestamp,
    }
}

/// Runs blocking grader work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, GradeError> + Send + 'static) -> Result<T, ApiError> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

async fn list_questions(State(g): State<Arc<Grader>>) -> Json<Vec<QuestionView>> {
    let views = g
        .bank()
        .questions()
        .iter()
        .map(|q| QuestionView {
            id: q.id.clone(),
            title: q.title.clone(),
            segment_language: q.segment_language,
            displayed_code: q.displayed_code.clone(),
            instruction_language_mode: q.instruction_language_mode,
        })
        .collect();
    Json(views)
}

async fn create_session(State(g): State<Arc<Grader>>) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let session_id = blocking(move || g.create_session(None)).await?;
    Ok((StatusCode::CREATED, Json(SessionView { session_id })))
}

async fn submit(
    State(g): State<Arc<Grader>>,
    UrlPath((sid, qid)): UrlPath<(String, String)>,
    Json(body): Json<SubmitBody>,
) -> ApiResult<AttemptView> {
    let (attempt, remaining) = blocking(move || {
        let a = g.submit(&sid, &qid, &body.response_text, body.declared_language.as_deref())?;
        let remaining = g.session_snapshot(&sid)?.attempts_remaining(&qid);
        Ok((a, remaining))
    })
    .await?;
    if attempt.verdict.kind == VerdictKind::AttemptsExhausted {
        return Err(ApiError::new(StatusCode::CONFLICT, "attempts_exhausted", attempt.verdict.detail));
    }
    Ok(Json(attempt_view(attempt, remaining)))
}

async fn progress(State(g): State<Arc<Grader>>, UrlPath(sid): UrlPath<String>) -> ApiResult<ProgressView> {
    let session_id = sid.clone();
    let (questions, cap) = blocking(move || Ok((g.progress(&sid)?, g.session_snapshot(&sid)?.policy.attempt_cap()))).await?;
    Ok(Json(ProgressView { session_id, attempt_cap: cap, questions }))
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

/// Builds the router. When `ui_dir` is given its files are served under `/`.
pub fn router(grader: Arc<Grader>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/questions", get(list_questions))
        .route("/sessions", post(create_session))
        .route("/sessions/{sid}/questions/{qid}/attempts", post(submit))
        .route("/sessions/{sid}/progress", get(progress))
        .fallback(api_not_found)
        .with_state(grader);
    let app = Router::new().nest("/api", api);
    match ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => app,
    }
}
