//! Configuration, presets and experiment drivers behind the command-line
//! tool.

pub mod checks;
pub mod config;
pub mod experiment;
pub mod presets;

pub use checks::{run_checks, CheckOutcome};
pub use config::{ExperimentConfig, DEFAULT_SEED};
pub use experiment::{compare_schemes, run_experiment, ComparisonRun, ExperimentReport, Manifest, OracleRow};
pub use presets::{catalog, OracleBinding, Preset, Scale, PRESET_NAMES};
