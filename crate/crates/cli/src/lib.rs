//! Experiment orchestration for the wave-equation PINN: training runs,
//! multi-seed sweeps, bounds for stored networks and theory tables.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod presets;

use std::path::PathBuf;

use anyhow::Result;

pub use config::{BoundMode, RunConfig, Setting};
pub use pipeline::{run, sweep, Aggregate, RunReport, SeedReport};

/// Command-line overrides applied on top of a config file or preset.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub seeds: Option<String>,
    pub out: Option<PathBuf>,
    pub mode: Option<BoundMode>,
    pub jobs: Option<usize>,
}

/// Config file, else preset, else `fig5-small`; then environment, then flags.
pub fn resolve_config(o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match (&o.config, &o.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => presets::preset(name)?,
        (None, None) => RunConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(s) = &o.seeds {
        cfg.seeds = config::parse_seeds(s)?;
    }
    if let Some(out) = &o.out {
        cfg.out = out.clone();
    }
    if let Some(m) = o.mode {
        cfg.bound.mode = m;
    }
    if let Some(j) = o.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}
