use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use flowmoods::pipeline::PipelineError;
use flowmoods::session::SessionError;
use serde::{Deserialize, Serialize};

/// Error body of every failed request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

/// Machine-readable error codes.
///
/// | code | status |
/// |---|---|
/// | `bad_request` | 400 |
/// | `unknown_mood` | 400 |
/// | `ineligible_user` | 400 |
/// | `song_not_played` | 400 |
/// | `unknown_user` | 404 |
/// | `unknown_session` | 404 |
/// | `session_exhausted` | 409 |
/// | `fallback_unavailable` | 409 |
/// | `snapshot_incomplete` | 400 |
/// | `version_mismatch` | 400 |
/// | `snapshot_invalid` | 400 |
/// | `no_snapshot_dir` | 400 |
/// | `internal` | 500 |
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn with_code(mut self, code: &'static str) -> Self {
        self.code = code;
        self
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no live session {id:?}"))
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        let (status, code) = match e {
            SessionError::UnknownUser(_) => (StatusCode::NOT_FOUND, "unknown_user"),
            SessionError::IneligibleUser { .. } => (StatusCode::BAD_REQUEST, "ineligible_user"),
            SessionError::NotPlayed(_) => (StatusCode::BAD_REQUEST, "song_not_played"),
            SessionError::Exhausted => (StatusCode::CONFLICT, "session_exhausted"),
            SessionError::EmptyFallback(_) | SessionError::NoUserVector(_) => {
                (StatusCode::CONFLICT, "fallback_unavailable")
            }
            SessionError::Config(_) | SessionError::Retrieval(_) | SessionError::Snapshot(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        ApiError::new(status, code, message)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let code = match e {
            PipelineError::Incomplete { .. } => "snapshot_incomplete",
            PipelineError::VersionMismatch { .. } => "version_mismatch",
            _ => "snapshot_invalid",
        };
        ApiError::new(StatusCode::BAD_REQUEST, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}
