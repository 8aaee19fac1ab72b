//! Ensemble runner for continuous-measurement trajectories: configuration,
//! seeded parallel execution, summaries and output files.

pub mod commands;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod summary;

pub use config::{ConfigError, Format, RunConfig, RunMode};
pub use ensemble::{run_ensemble, run_spec, EnsembleSpec};
pub use error::RunError;
pub use summary::{summarize_ensemble, EnsembleSummary, TrajectoryRecord};
