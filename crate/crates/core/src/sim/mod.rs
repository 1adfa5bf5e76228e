//! Deterministic phone-probing simulator standing in for live radio capture.

mod engine;
mod profile;
mod report;
mod scenario;

pub use engine::{run_scenario, GroundTruth, ProbeEvent, SimOutput, Transition};
pub use profile::{
    profile_from_table3, DeviceProfile, GapModel, Randomization, ScreenState, StateBehavior,
    BUILTIN_MODELS, BURST_WINDOW_MS, MIN_EVENT_GAP_S,
};
pub use report::{
    emit_experiment_report, experiment_report_for, write_report_csv, ReportRow, REPORT_HEADER,
};
pub use scenario::{
    DeviceSpec, ItineraryStop, ScannerSpec, Scenario, ScenarioFile, ScreenChange, SimulatedDevice,
    Stay, DEFAULT_START_MS,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown device profile {name:?}; available: {available}")]
    UnknownProfile { name: String, available: String },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SimError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
