//! Configuration-driven experiment runner and acceptance suite for pfg-core.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod manifest;
pub mod presets;
pub mod scenario;
pub mod sonar;

pub use config::ScenarioConfig;
pub use error::{HarnessError, Result};
pub use scenario::{run_scenario, RunOptions, RunSummary};
