//! Run configuration, scenario execution and data export.

pub mod config;
pub mod export;
pub mod metrics;
pub mod run;

pub use config::{env_overrides, FitConfig, RunConfig};
pub use export::{props_table, write_control, write_trajectory};
pub use metrics::{compute_metrics, Metrics};
pub use run::{build_model, run_scenario, Manifest, Mode, Status};
