//! Batch front-end over the synthesis library: read a JSON run
//! configuration, execute the requested modes, audit every result from its
//! serialized controller alone, and emit reports plus optional
//! frequency-response data.

pub mod config;
pub mod freq;
pub mod run;

pub use config::{load_config, PlantConfig, RunConfig, StructureConfig, ToleranceConfig};
pub use freq::emit_frequency_response;
pub use run::{run_config, ModeRun, QiSummary, ReportFile, Timing, ToolInfo};

use std::fmt;

/// Failure classes map one-to-one onto process exit codes, so scripts can
/// tell a bad config from a hard synthesis failure from a result that did
/// not survive its own audit.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, unparseable, or inconsistent configuration (exit 2).
    Config(String),
    /// The synthesis itself failed (exit 3).
    Synthesis(String),
    /// A result failed re-verification (exit 4).
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Synthesis(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Synthesis(m) => write!(f, "synthesis: {m}"),
            CliError::Verification(m) => write!(f, "verification: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
