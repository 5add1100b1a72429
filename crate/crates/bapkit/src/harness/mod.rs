//! Experiment harness: flat-file configuration, the five CLI commands, the
//! verification suite, and fingerprinted CSV / run-log output.

pub mod commands;
pub mod config;
pub mod report;
pub mod verify;

pub use commands::{
    cmd_bap_run, cmd_cost_table, cmd_regi_table, cmd_spatial_dump, corner_fraction, CommandReport,
};
pub use config::{ExperimentConfig, InitKind, ModelChoice, RawConfig};
pub use report::{format_float, CsvFile, RunLog};
pub use verify::{cmd_verify, CheckSection, VerifyReport};
