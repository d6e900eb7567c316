use coilboard_core::grid::GridError;
use coilboard_core::planner::PlanError;
use coilboard_core::sim::{MarkerId, SimError};
use serde::Serialize;
use thiserror::Error;

use crate::controller::PlanSummary;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{kind} '{name}' not found")]
    NotFound { kind: &'static str, name: String, suggestions: Vec<String> },
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("target is {distance:.2} mm from marker {other}, minimum separation is {min:.2} mm")]
    Separation { other: MarkerId, distance: f64, min: f64 },
    #[error("{0}")]
    Conflict(String),
    #[error("configuration needs {targets} markers but only {markers} are on the board")]
    Deficit { targets: usize, markers: usize },
    #[error("planner could not route markers {:?}", .0.unplanned)]
    PartialFailure(Box<PlanSummary>),
    #[error("{0}")]
    Unreachable(String),
    #[error("graphic uses unsupported elements: {}", .0.join(", "))]
    UnsupportedGraphic(Vec<String>),
    #[error("content store error: {0}")]
    Storage(String),
    #[error("executor is not running")]
    Unavailable,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound { .. } => "not_found",
            ServiceError::Validation(_) => "validation",
            ServiceError::Separation { .. } => "separation",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Deficit { .. } => "marker_deficit",
            ServiceError::PartialFailure(_) => "partial_failure",
            ServiceError::Unreachable(_) => "unreachable",
            ServiceError::UnsupportedGraphic(_) => "unsupported_graphic",
            ServiceError::Storage(_) => "storage",
            ServiceError::Unavailable => "unavailable",
        }
    }

    pub fn not_found(kind: &'static str, name: impl Into<String>) -> Self {
        ServiceError::NotFound { kind, name: name.into(), suggestions: Vec::new() }
    }

    pub fn body(&self) -> ErrorBody {
        let details = match self {
            ServiceError::NotFound { suggestions, .. } if !suggestions.is_empty() => {
                serde_json::json!({ "suggestions": suggestions })
            }
            ServiceError::PartialFailure(summary) => serde_json::to_value(summary).unwrap_or_default(),
            ServiceError::UnsupportedGraphic(items) => serde_json::json!({ "offending": items }),
            ServiceError::Deficit { targets, markers } => serde_json::json!({ "targets": targets, "markers": markers }),
            ServiceError::Separation { other, distance, min } => {
                serde_json::json!({ "marker_id": other, "distance_mm": distance, "min_mm": min })
            }
            _ => serde_json::Value::Null,
        };
        ErrorBody { error: ErrorDetail { code: self.code(), message: self.to_string(), details } }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Serialize)]
pub struct ErrorDetail {
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl From<GridError> for ServiceError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::UnknownCoil(id) => ServiceError::not_found("coil", id.to_string()),
            GridError::OutOfRange { .. } | GridError::UnknownModule(_) => ServiceError::not_found("coil", e.to_string()),
            other => ServiceError::Validation(other.to_string()),
        }
    }
}

impl From<SimError> for ServiceError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::UnknownMarker(id) => ServiceError::not_found("marker", id.to_string()),
            SimError::Separation { other, distance, min } => ServiceError::Separation { other, distance, min },
            other => ServiceError::Validation(other.to_string()),
        }
    }
}

impl From<PlanError> for ServiceError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Grid(g) => g.into(),
            PlanError::Unreachable { .. } => ServiceError::Unreachable(e.to_string()),
            PlanError::DuplicateGoal(..) | PlanError::DuplicateStart(..) | PlanError::GoalsTooClose(..) => {
                ServiceError::Conflict(e.to_string())
            }
            other => ServiceError::Validation(other.to_string()),
        }
    }
}
