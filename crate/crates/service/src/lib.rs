//! Control service for the coil marker display: authored content, marker
//! commands, a serialized schedule executor and the HTTP API in front of it.

pub mod backend;
pub mod content;
pub mod controller;
pub mod demo;
pub mod error;
pub mod executor;
pub mod history;
pub mod http;
pub mod import;
pub mod scenario;

pub use controller::{Controller, ControllerOptions, PlanSummary, Snapshot, StepDirection};
pub use error::ServiceError;
pub use executor::{ExecutorConfig, ServiceHandle};
