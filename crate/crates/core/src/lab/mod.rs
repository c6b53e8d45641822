//! Config-driven experiment runner.
//!
//! An experiment is a TOML file naming a system, an observable, a
//! normalizing sequence, a target law and one of twelve experiment kinds,
//! plus assertions over the summary statistics the kind reports. Running
//! it writes a bundle directory:
//!
//! - `config.resolved.toml`: the config with derived quantities filled in
//!   (centering offset, target law),
//! - `summary.json`: statistics, evaluated assertions, runtime,
//! - plot-ready CSV tables.
//!
//! Every file carries the SHA-256 of the resolved config, and [`report`]
//! refuses bundles whose hashes disagree.

mod bundle;
mod config;
mod presets;
mod run;

pub use bundle::{
    config_hash, find_bundles, load_bundle, report, run_experiment, CheckResult, Report, ReportRow,
    Summary, CONFIG_FILE, SUMMARY_FILE,
};
pub use config::*;
pub use presets::{preset, presets_for_criterion, write_presets, Preset, PRESETS};
pub use run::{execute, resolve, Outcome, Table};
