use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

/// An error reported to HTTP clients as `{"error": {"code", "message"}}`.
#[derive(Debug, Clone, PartialEq)]
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

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<poseguard_core::Error> for ApiError {
    fn from(e: poseguard_core::Error) -> Self {
        use poseguard_core::Error as E;
        match e {
            E::InvalidParams(_) => {
                Self::new(StatusCode::BAD_REQUEST, "invalid_params", e.to_string())
            }
            E::InsufficientData(_) => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "insufficient_data",
                e.to_string(),
            ),
            E::Invalid(_) | E::Parse { .. } => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_data",
                e.to_string(),
            ),
            E::Io { .. } => Self::internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
