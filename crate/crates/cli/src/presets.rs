//! Named sweep presets for the damped-wave benchmark.

use anyhow::{bail, Result};
use wavepinn_core::{GridCounts, TrainConfig};

use crate::config::{ArchConfig, BoundConfig, BoundMode, ProblemConfig, RunConfig, Setting};

pub const PRESETS: [&str; 2] = ["fig5-small", "fig5-full"];

/// Iteration cap of the full preset (a desk-scale budget, well below 50000).
pub const FULL_MAX_ITERATIONS: usize = 3000;
pub const SMALL_MAX_ITERATIONS: usize = 2000;

/// Collocation grids with 144, 1500, 10000 and 18750 points in total.
pub fn damped_wave_setting(total: usize) -> Option<Setting> {
    let counts = match total {
        144 => GridCounts::uniform(2, (4, 3), (5, 3), 6),
        1500 => GridCounts::uniform(2, (12, 7), (14, 7), 10),
        10000 => GridCounts::uniform(2, (24, 14), (24, 12), 28),
        18750 => GridCounts::uniform(2, (35, 13), (31, 14), 33),
        _ => return None,
    };
    debug_assert_eq!(counts.total_points(), total);
    Some(Setting { label: format!("m{total}"), counts })
}

fn base(totals: &[usize], seeds: std::ops::Range<u64>, iterations: usize, out: &str) -> RunConfig {
    RunConfig {
        problem: ProblemConfig::DampedWave,
        architecture: ArchConfig::default(),
        train: TrainConfig {
            max_iterations: iterations,
            history_stride: 10,
            ..TrainConfig::default()
        },
        settings: totals.iter().filter_map(|&t| damped_wave_setting(t)).collect(),
        metric_factor: 4,
        bound: BoundConfig { mode: BoundMode::Empirical, ..BoundConfig::default() },
        seeds: seeds.collect(),
        out: out.into(),
        jobs: 1,
    }
}

pub fn preset(name: &str) -> Result<RunConfig> {
    Ok(match name {
        "fig5-small" => base(&[144, 1500], 0..3, SMALL_MAX_ITERATIONS, "runs/fig5-small"),
        "fig5-full" => base(&[144, 1500, 10000, 18750], 0..10, FULL_MAX_ITERATIONS, "runs/fig5-full"),
        other => bail!("unknown preset `{other}` (known: {})", PRESETS.join(", ")),
    })
}
