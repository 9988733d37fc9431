//! Scenario runner for `roughflow`: JSON scenarios, trajectory solves,
//! Monte-Carlo tail and small-noise experiments, bound sweeps and polyline
//! lifting.

pub mod commands;
pub mod config;
pub mod error;
pub mod ldp;
pub mod tails;

pub use config::{Scenario, ScenarioConfig};
pub use error::{CliError, CliResult};
