//! Batch front end: analysis of individual-level or summary data and simulation runs.

pub mod analysis;
pub mod config;
pub mod error;
pub mod forest;
pub mod input;
pub mod simulate;

pub use analysis::{run_analysis, AnalysisOutput, AnalysisReport};
pub use config::{load_analysis_config, load_simulation_config, parse_analysis_config, parse_simulation_config, AnalysisConfig, InputKind, SimulationConfig};
pub use error::CliError;
pub use simulate::run_simulation;
