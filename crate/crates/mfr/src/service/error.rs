use mfr_core::RecognitionError;
use thiserror::Error;

use super::auth::AuthError;
use crate::pipeline::PipelineError;
use crate::registry::{RegistryError, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("bad image: {0}")]
    BadImage(String),
    #[error("no face detected{}", .0.as_ref().map(|d| format!(" in {d}")).unwrap_or_default())]
    NoFaceDetected(Option<String>),
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("no recognition model is loaded")]
    ModelUnavailable,
    #[error("no match threshold is configured and the gallery is too small to calibrate one")]
    ThresholdUnavailable,
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error("batch checksum does not match its reports")]
    ChecksumMismatch,
    #[error("batch sequence numbers must be positive and strictly ascending")]
    NonAscendingSeq,
    #[error("request body exceeds the size limit")]
    PayloadTooLarge,
    #[error("not found: {0}")]
    NotFound(String),
    #[error(transparent)]
    Registry(RegistryError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Validation(_) => "VALIDATION_ERROR",
            Self::BadImage(_) => "BAD_IMAGE",
            Self::NoFaceDetected(_) => "NO_FACE_DETECTED",
            Self::EmptyGallery => "EMPTY_GALLERY",
            Self::ModelUnavailable => "MODEL_UNAVAILABLE",
            Self::ThresholdUnavailable => "THRESHOLD_UNAVAILABLE",
            Self::Auth(AuthError::Unauthenticated) => "AUTH_FAILURE",
            Self::Auth(AuthError::Forbidden(_)) => "FORBIDDEN",
            Self::ChecksumMismatch => "CHECKSUM_MISMATCH",
            Self::NonAscendingSeq => "NON_ASCENDING_SEQ",
            Self::PayloadTooLarge => "PAYLOAD_TOO_LARGE",
            Self::NotFound(_) => "NOT_FOUND",
            Self::Registry(e) => match e {
                RegistryError::Validation(_) => "VALIDATION_ERROR",
                RegistryError::ReportNotFound(_) => "REPORT_NOT_FOUND",
                RegistryError::ReportNotClaimable { .. } => "REPORT_NOT_CLAIMABLE",
                RegistryError::EmptyEvidence => "EMPTY_EVIDENCE",
                RegistryError::ClaimNotFound(_) => "CLAIM_NOT_FOUND",
                RegistryError::AlreadyDecided(_) => "ALREADY_DECIDED",
                RegistryError::PersonNotFound(_) => "PERSON_NOT_FOUND",
                RegistryError::AlertNotFound(_) => "ALERT_NOT_FOUND",
                RegistryError::AlreadyAcknowledged(_) => "ALREADY_ACKNOWLEDGED",
                RegistryError::InvalidTransition { .. } => "INVALID_TRANSITION",
                RegistryError::BadPage(_) => "BAD_PAGE",
                RegistryError::BadCursor => "BAD_CURSOR",
                RegistryError::BadQuery(_) => "BAD_QUERY",
                RegistryError::Store(StoreError::CorruptLog { .. }) => "CORRUPT_LOG",
                RegistryError::Store(_) => "INTERNAL",
            },
            Self::Internal(_) => "INTERNAL",
        }
    }

    /// HTTP status class for the error.
    pub fn status(&self) -> u16 {
        match self.code() {
            "VALIDATION_ERROR" | "BAD_IMAGE" | "CHECKSUM_MISMATCH" | "NON_ASCENDING_SEQ"
            | "EMPTY_EVIDENCE" | "BAD_PAGE" | "BAD_CURSOR" | "BAD_QUERY" => 400,
            "AUTH_FAILURE" => 401,
            "FORBIDDEN" => 403,
            "NOT_FOUND" | "REPORT_NOT_FOUND" | "CLAIM_NOT_FOUND" | "PERSON_NOT_FOUND"
            | "ALERT_NOT_FOUND" => 404,
            "EMPTY_GALLERY"
            | "REPORT_NOT_CLAIMABLE"
            | "ALREADY_DECIDED"
            | "ALREADY_ACKNOWLEDGED"
            | "INVALID_TRANSITION" => 409,
            "PAYLOAD_TOO_LARGE" => 413,
            "NO_FACE_DETECTED" => 422,
            "MODEL_UNAVAILABLE" | "THRESHOLD_UNAVAILABLE" => 503,
            _ => 500,
        }
    }
}

impl From<RegistryError> for ServiceError {
    fn from(e: RegistryError) -> Self {
        Self::Registry(e)
    }
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        Self::Registry(RegistryError::Store(e))
    }
}

impl From<PipelineError> for ServiceError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::BadImage(v) => Self::BadImage(v.to_string()),
            PipelineError::NoFaceDetected => Self::NoFaceDetected(None),
            PipelineError::Recognition(RecognitionError::EmptyGallery) => Self::EmptyGallery,
            PipelineError::Recognition(RecognitionError::InvalidArgument(m)) => {
                Self::Validation(m.into())
            }
            PipelineError::Recognition(r) => Self::Internal(r.to_string()),
        }
    }
}
