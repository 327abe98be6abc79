//! Experiment runner for the coded-smoothing library.
//!
//! Each subcommand reads a flat `key=value` configuration, writes CSV tables
//! (17 significant digits), SVG line plots, a `report.txt` summary and the
//! fully resolved `config.txt` into its output directory.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod svg;

use std::path::Path;

pub use config::RunConfig;
pub use error::{CliError, Result};

/// Defaults, then the config file, then `--set` overrides, then `--seed`.
pub fn resolve_config(path: Option<&Path>, sets: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(sets)?;
    if let Some(s) = seed {
        cfg.set("seed", &s.to_string()).expect("seed is a known key");
    }
    Ok(cfg)
}
