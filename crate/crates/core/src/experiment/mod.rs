//! Config-driven experiments, presets and result tables.

mod config;
mod presets;
mod results;
mod runner;
mod scaling;

pub use config::{
    AllocationSpec, BinningSpec, ExperimentConfig, HorizonMode, InitialSpec, ObservableSpec, OutputFormat,
    OutputSpec, PotentialSpec, SweepVariable,
};
pub use presets::{preset, presets, Preset};
pub use results::{emit_results, render_results, ResultRow, ResultsTable, TableMetadata, CSV_HEADER};
pub use runner::{audit_experiment, config_hash, run_experiment, RunOptions};
pub use scaling::{compare_scaling, ScalingLaw, ScalingReport};
