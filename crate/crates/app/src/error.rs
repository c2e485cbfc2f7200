use std::fmt;

use misinfo_core::deploy::DeployError;
use misinfo_core::domain::DomainError;
use misinfo_core::features::FeatureError;
use misinfo_core::graph::GraphError;
use misinfo_core::ingest::IngestError;
use misinfo_core::labels::LabelError;
use misinfo_core::ml::MlError;
use misinfo_core::synth::SynthError;
use serde::Serialize;

/// Error carried to the process boundary as `{"error":{"code","message"}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AppError {
    pub code: String,
    pub message: String,
}

impl AppError {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        AppError { code: code.into(), message: message.into() }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        AppError::new("invalid_argument", message)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for AppError {}

macro_rules! coded {
    ($($t:ty),*) => {$(
        impl From<$t> for AppError {
            fn from(e: $t) -> Self {
                AppError::new(e.code(), e.to_string())
            }
        }
    )*};
}

coded!(DeployError, FeatureError, GraphError, IngestError, LabelError, MlError, SynthError);

impl From<DomainError> for AppError {
    fn from(e: DomainError) -> Self {
        AppError::new("invalid_domain", e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::new("parse", e.to_string())
    }
}

pub type AppResult<T> = Result<T, AppError>;
