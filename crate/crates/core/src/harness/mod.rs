//! Experiment runner: config loading, full runs over either transport,
//! metrics and detection sweeps.

pub mod config;
pub mod metrics;
pub mod runner;
pub mod sweep;

pub use config::{Defense, ExperimentConfig, PlacementSpec, TransportKind};
pub use metrics::{read_metrics_csv, write_metrics_csv, RoundMetrics};
pub use runner::{
    prepare, run_experiment, summarize, write_outputs, ExperimentOutcome, Setup, Summary,
};
pub use sweep::{
    place_attackers, scaled_window, sweep_detection, sweep_tpr_surface, table_placements,
    write_detection, write_tpr_surface, DetectionRow, TprCell,
};
