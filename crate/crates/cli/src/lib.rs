//! Scenario files, the simulation pipeline and parameter sweeps behind the `buttonsim` binary.

pub mod error;
pub mod pipeline;
pub mod scenario;
pub mod sweep;

pub use error::CliError;
pub use pipeline::{run_scenario, RunSummary};
pub use scenario::Scenario;
pub use sweep::run_sweep;
