//! Experiment orchestration: configs, single- and cross-dataset runs, and
//! fusion-ratio sweeps.

mod config;
mod run;
mod sweep;

pub use config::{ExperimentConfig, ExperimentSection, Mode, OUTPUT_ROOT_ENV};
pub use run::{
    create_run_dir, run_experiment, split_by_subject, AccessEvent, AccessLog, ExperimentReport, SeedResult, Summary,
    REPORT_VERSION,
};
pub use sweep::{sweep_delta, SweepReport, SweepRow};

#[cfg(test)]
mod tests;
