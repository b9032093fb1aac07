//! End-to-end harness: configuration, trace ingest, the deterministic
//! closed loop and its telemetry log.

mod config;
mod sim;
mod telemetry;
pub mod tools;
mod trace;

use thiserror::Error;

pub use config::{RunConfig, KEYS as CONFIG_KEYS, MAX_CHANNELS};
pub use sim::{kpa_to_wire, run_simulation, wire_to_kpa, RunSummary, SimOutput, Simulation};
pub use telemetry::{write_telemetry, TelemetryRecord, TELEMETRY_HEADER};
pub use trace::{ingest_trace, parse_trace, TraceKind, TraceRecord};

use crate::gesture::GestureError;
use crate::homeostasis::ControlError;
use crate::plant::PlantError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("trace line {line}: {reason}")]
    TraceMalformed { line: usize, reason: String },
    #[error("trace line {line}: timestamp {t_ms} ms is earlier than {previous_ms} ms")]
    NonMonotonicTime { line: usize, t_ms: u64, previous_ms: u64 },
    #[error("schedule line {line}: {reason}")]
    ScheduleMalformed { line: usize, reason: String },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Gesture(#[from] GestureError),
}

impl PipelineError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::ConfigInvalid(_) | PipelineError::ScheduleMalformed { .. } => 2,
            PipelineError::TraceMalformed { .. } | PipelineError::NonMonotonicTime { .. } => 3,
            PipelineError::Gesture(GestureError::NonMonotonicTime { .. }) => 3,
            _ => 1,
        }
    }
}
