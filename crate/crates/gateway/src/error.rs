use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use companion_core::pipeline::EngineError;
use companion_core::store::StoreError;
use serde::{Deserialize, Serialize};

/// Every machine code the API can return. Each code has exactly one status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Unauthorized,
    NotFound,
    MethodNotAllowed,
    SessionNotFound,
    ProfileNotFound,
    SessionEnded,
    TurnInProgress,
    InvalidRequest,
    InvalidQuery,
    InvalidStrategy,
    UnsupportedMediaType,
    PayloadTooLarge,
    EmptyInput,
    InvalidAudio,
    InvalidProfile,
    ProfileIdMismatch,
    InvalidEvents,
    StoreFailure,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 18] = [
        ErrorCode::Unauthorized,
        ErrorCode::NotFound,
        ErrorCode::MethodNotAllowed,
        ErrorCode::SessionNotFound,
        ErrorCode::ProfileNotFound,
        ErrorCode::SessionEnded,
        ErrorCode::TurnInProgress,
        ErrorCode::InvalidRequest,
        ErrorCode::InvalidQuery,
        ErrorCode::InvalidStrategy,
        ErrorCode::UnsupportedMediaType,
        ErrorCode::PayloadTooLarge,
        ErrorCode::EmptyInput,
        ErrorCode::InvalidAudio,
        ErrorCode::InvalidProfile,
        ErrorCode::ProfileIdMismatch,
        ErrorCode::InvalidEvents,
        ErrorCode::StoreFailure,
    ];

    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::Unauthorized => StatusCode::UNAUTHORIZED,
            ErrorCode::NotFound | ErrorCode::SessionNotFound | ErrorCode::ProfileNotFound => {
                StatusCode::NOT_FOUND
            }
            ErrorCode::MethodNotAllowed => StatusCode::METHOD_NOT_ALLOWED,
            ErrorCode::SessionEnded | ErrorCode::TurnInProgress => StatusCode::CONFLICT,
            ErrorCode::InvalidRequest
            | ErrorCode::InvalidQuery
            | ErrorCode::InvalidStrategy
            | ErrorCode::EmptyInput
            | ErrorCode::InvalidAudio
            | ErrorCode::ProfileIdMismatch
            | ErrorCode::InvalidEvents => StatusCode::BAD_REQUEST,
            ErrorCode::UnsupportedMediaType => StatusCode::UNSUPPORTED_MEDIA_TYPE,
            ErrorCode::PayloadTooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            ErrorCode::InvalidProfile => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::StoreFailure => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Unauthorized => "unauthorized",
            ErrorCode::NotFound => "not_found",
            ErrorCode::MethodNotAllowed => "method_not_allowed",
            ErrorCode::SessionNotFound => "session_not_found",
            ErrorCode::ProfileNotFound => "profile_not_found",
            ErrorCode::SessionEnded => "session_ended",
            ErrorCode::TurnInProgress => "turn_in_progress",
            ErrorCode::InvalidRequest => "invalid_request",
            ErrorCode::InvalidQuery => "invalid_query",
            ErrorCode::InvalidStrategy => "invalid_strategy",
            ErrorCode::UnsupportedMediaType => "unsupported_media_type",
            ErrorCode::PayloadTooLarge => "payload_too_large",
            ErrorCode::EmptyInput => "empty_input",
            ErrorCode::InvalidAudio => "invalid_audio",
            ErrorCode::InvalidProfile => "invalid_profile",
            ErrorCode::ProfileIdMismatch => "profile_id_mismatch",
            ErrorCode::InvalidEvents => "invalid_events",
            ErrorCode::StoreFailure => "store_failure",
        }
    }
}

/// An error response: `{"code", "message", "fields"?}` with the code's status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    /// Offending request fields, when the error is about specific ones.
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<String>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            fields: Vec::new(),
        }
    }

    pub fn with_fields(mut self, fields: Vec<String>) -> Self {
        self.fields = fields;
        self
    }

    pub fn status(&self) -> StatusCode {
        self.code.status()
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code.as_str().into(),
            message: self.message.clone(),
            fields: self.fields.clone(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.code == ErrorCode::StoreFailure {
            tracing::error!(message = %self.message, "store failure");
        }
        (self.status(), Json(self.body())).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::UnknownSession(_) => ApiError::new(ErrorCode::SessionNotFound, message),
            StoreError::UnknownProfile(_) => ApiError::new(ErrorCode::ProfileNotFound, message),
            StoreError::SessionEnded(_) => ApiError::new(ErrorCode::SessionEnded, message),
            StoreError::Validation(v) => {
                ApiError::new(ErrorCode::InvalidProfile, message).with_fields(v.fields())
            }
            StoreError::DuplicateTurn { .. }
            | StoreError::Io { .. }
            | StoreError::Corrupt { .. } => ApiError::new(ErrorCode::StoreFailure, message),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let message = e.to_string();
        match e {
            EngineError::UnknownSession(_) => ApiError::new(ErrorCode::SessionNotFound, message),
            EngineError::SessionEnded(_) => ApiError::new(ErrorCode::SessionEnded, message),
            EngineError::Busy(_) => ApiError::new(ErrorCode::TurnInProgress, message),
            EngineError::EmptyInput => ApiError::new(ErrorCode::EmptyInput, message),
            EngineError::InvalidAudio(_) => ApiError::new(ErrorCode::InvalidAudio, message),
            EngineError::UnknownProfile(_) => ApiError::new(ErrorCode::ProfileNotFound, message),
            EngineError::Store(s) => s.into(),
        }
    }
}
