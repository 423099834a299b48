use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

/// Error body: `{"error": {"code": "...", "message": "..."}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session `{id}`"))
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn body(&self) -> serde_json::Value {
        json!({ "error": { "code": self.code, "message": self.message } })
    }
}

impl From<adaptrate_core::Error> for ApiError {
    fn from(e: adaptrate_core::Error) -> Self {
        use adaptrate_core::Error as E;
        let code = match &e {
            E::DimensionMismatch { .. } => "dimension_mismatch",
            E::InvalidRate { .. } => "invalid_rate",
            E::InvalidModel(_) => "invalid_model",
            E::InvalidPrior(_) => "invalid_prior",
            E::InvalidConfig(_) => "invalid_config",
            E::StateOutOfRange { .. } => "state_out_of_range",
            E::InvalidTime(_) => "invalid_time",
            E::NonIncreasingTime { .. } => "non_increasing_time",
            E::NotStationary { .. } => "not_stationary",
            E::LikelihoodVanished => "likelihood_vanished",
            E::PriorMassTooSmall { .. } => "prior_mass_too_small",
            _ => return Self::internal(e.to_string()),
        };
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
