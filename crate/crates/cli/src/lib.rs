//! Config-driven runner for the eternal-solution experiments: parses JSON
//! configs, runs the experiment kinds, writes JSON and CSV reports, and
//! compares run directories.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod regress;
pub mod report;

pub use config::{load, parse, schema, ConfigError, ExperimentConfig, Kind, Prepared};
pub use experiments::{Check, ExperimentResult};
pub use regress::{regress, DiffReport, MissingGolden};
pub use report::{resolve_out_dir, run, summary, RunResult};

/// Process exit codes.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const CHECK_FAILED: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const INTERNAL: u8 = 3;
}
