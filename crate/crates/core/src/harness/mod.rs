//! Surrogate evaluation, parameter sweeps and the end-to-end pipeline.

pub mod config;
pub mod evaluate;
pub mod pipeline;
pub mod sweep;

pub use config::PipelineConfig;
pub use evaluate::{evaluate_surrogate, EvaluationReport, Surrogate};
pub use pipeline::{execute, run_pipeline, run_pipeline_file, run_sweep, Reuse, RunOutcome, Until};
pub use sweep::{sweep, sweep_to_dir, SweepGrid, SweepInputs, SweepRecord};
