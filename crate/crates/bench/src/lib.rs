//! Shared fixtures for the criterion benches.

use wavepinn_core::{build_sets, damped_wave_problem, Architecture, CollocationSets, GridCounts, InitScheme, MlpParams, ProblemSpec};

/// Damped-wave collocation grids by total point count.
pub fn counts(total: usize) -> GridCounts {
    match total {
        144 => GridCounts::uniform(2, (4, 3), (5, 3), 6),
        1500 => GridCounts::uniform(2, (12, 7), (14, 7), 10),
        10000 => GridCounts::uniform(2, (24, 14), (24, 12), 28),
        18750 => GridCounts::uniform(2, (35, 13), (31, 14), 33),
        other => panic!("no grid with {other} points"),
    }
}

pub struct Fixture {
    pub problem: ProblemSpec,
    pub sets: CollocationSets,
    pub net: MlpParams,
}

/// 3-80-80-1 tanh network on the damped-wave problem.
pub fn fixture(total: usize) -> Fixture {
    let problem = damped_wave_problem();
    let sets = build_sets(&problem.domain, &counts(total)).expect("grid");
    let arch = Architecture::new(vec![3, 80, 80, 1], None).expect("architecture");
    let net = MlpParams::init(&arch, 0, InitScheme::UniformFanIn).expect("init");
    Fixture { problem, sets, net }
}
