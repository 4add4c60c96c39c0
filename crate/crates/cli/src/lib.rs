//! Config-driven experiment harness around `fde-core`.

pub mod config;
pub mod report;
pub mod run;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind};
pub use report::{RunReport, EXIT_CONFIG, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_PASS, EXIT_RUNTIME};
pub use run::{run, RunError};
