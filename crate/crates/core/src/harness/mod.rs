//! Experiment configuration, trace persistence and sweep drivers.

pub mod config;
pub mod sweep;
pub mod trace;

pub use config::{parse_config, ExperimentConfig};
pub use sweep::{sweep_epsilon, RunShape, SweepRow, SweepTable};
pub use trace::{plan_from_text, plan_to_text, read_trace, write_trace, write_trace_opts};
