//! Experiment harness for the `latefusion` solvers: dataset loading,
//! grid execution, result files, synthetic fixtures and timing sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod emit;
pub mod error;
pub mod experiment;
pub mod fixture;
pub mod io;

pub use config::{Algorithm, ExperimentConfig};
pub use emit::emit_results;
pub use error::{HarnessError, Result};
pub use experiment::{cell_seed, run_experiment, run_on_dataset, CellRecord, RunRecord};
pub use fixture::write_synthetic;
pub use io::{load_dataset, Dataset};
