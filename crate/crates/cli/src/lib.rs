//! Command-line front end: scenario files, presets, CSV output and the
//! audit, sweep and verification commands.

pub mod commands;
pub mod error;
pub mod output;
pub mod presets;
pub mod scenario;

pub use error::{CliError, Result, Verdict};
pub use scenario::{Overrides, ScenarioFile};
