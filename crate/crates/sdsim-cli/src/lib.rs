//! Command implementations behind the `sdsim` binary.
//!
//! Output files are plain CSV/JSON so plots and comparisons can be built
//! with external tooling; every JSON report echoes the resolved
//! configuration it was produced under. All commands are deterministic:
//! the same configuration and seed yield byte-identical files.

pub mod commands;
pub mod config;

use std::fmt;

/// Process-level failure classes, mapped one-to-one onto exit codes:
/// usage/config errors exit 1, valid-but-empty results exit 2, and
/// internal invariant violations exit 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Infeasible(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Infeasible(msg) => write!(f, "{msg}"),
            CliError::Internal(msg) => write!(f, "internal invariant violation: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("io error: {e}"))
    }
}

impl From<sdsim_core::workload::WorkloadError> for CliError {
    fn from(e: sdsim_core::workload::WorkloadError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<sdsim_core::phase::PhaseError> for CliError {
    fn from(e: sdsim_core::phase::PhaseError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<sdsim_core::scheduler::SchedulerError> for CliError {
    fn from(e: sdsim_core::scheduler::SchedulerError) -> Self {
        match e {
            sdsim_core::scheduler::SchedulerError::ZeroBuffer => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<sdsim_core::simcore::SimError> for CliError {
    fn from(e: sdsim_core::simcore::SimError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(format!("serialization failed: {e}"))
    }
}
