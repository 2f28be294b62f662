//! Declarative experiment runner: configuration, reproducible parallel
//! ensembles, analyses and machine-readable outputs.

pub mod analysis;
pub mod config;
pub mod ensemble;
pub mod run;

pub use analysis::{Analysis, Check, FitRow, KsRow, QuantileRow, SampleTable};
pub use config::{ConfigError, ExperimentConfig, FieldError};
pub use run::{execute, read_samples, run, write_outputs, Command, EnsembleResult, Manifest, RunError};
