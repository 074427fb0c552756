//! Configured, reproducible batch runs over the striplab core.
//!
//! A run reads one JSON config, plans independent tasks over energies, sizes
//! and replicas, executes them on a thread pool and writes JSON-lines
//! records, CSV tables, SVG plots and a checksummed manifest. Task seeds
//! depend only on the task index, so outputs do not depend on the thread
//! count.

pub mod analysis;
pub mod config;
pub mod experiments;
pub mod plot;
pub mod records;
pub mod runner;

pub use config::{Experiment, ExperimentConfig};
pub use runner::{report, run, Report, RunManifest, RunOptions, RunOutcome};
