//! End-to-end orchestration: data generation or ingestion, estimation,
//! confidence region, dense realization, enumeration, sweeps over the noise
//! level, and Graphviz export.

mod config;
mod data;
mod dot;
mod run;
mod sweep;

pub use config::{parse_edges, EstimatorConfig, ExperimentConfig, NoiseConfig, NoiseModel, Protocol, SweepRange};
pub use data::{generate_data, latin_hypercube, read_dataset, write_dataset, Dataset, Manifest, RNG_NAME};
pub use dot::{realization_dot, write_dot};
pub use run::{
    estimate, load_model, matrix_rows, prepare_data, run_pipeline, run_with, write_outputs, EdgeRate, EstimateSummary, ExclusionCount, Outcome, Report,
    Timing, REPORT_SCHEMA,
};
pub use sweep::{ensure_dir, run_sweep, saturation_summary, write_sweep_csv, SweepRow};
