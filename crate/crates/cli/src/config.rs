//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wavepinn_core::bounds::GeometryConstants;
use wavepinn_core::problem::Growth;
use wavepinn_core::{
    damped_wave_problem, semilinear_power_problem, Architecture, BoxDomain, GridCounts, InitScheme, ProblemSpec, TrainConfig,
};

/// Environment override for the output directory.
pub const ENV_OUT: &str = "WAVEPINN_OUT";
/// Environment override for the number of seeds trained concurrently.
pub const ENV_JOBS: &str = "WAVEPINN_JOBS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    DampedWave,
    SemilinearPower {
        p: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
        horizon: f64,
        damping: String,
        u0: String,
        u1: String,
    },
    Expressions {
        name: String,
        lower: Vec<f64>,
        upper: Vec<f64>,
        horizon: f64,
        damping: String,
        nonlinearity: String,
        growth: Growth,
        u0: String,
        u1: String,
        #[serde(default)]
        exact: Option<String>,
    },
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig::DampedWave
    }
}

impl ProblemConfig {
    pub fn build(&self) -> Result<ProblemSpec> {
        Ok(match self {
            ProblemConfig::DampedWave => damped_wave_problem(),
            ProblemConfig::SemilinearPower { p, lower, upper, horizon, damping, u0, u1 } => {
                let dom = BoxDomain::new(lower.clone(), upper.clone(), *horizon)?;
                semilinear_power_problem(*p, dom, damping, u0, u1)?
            }
            ProblemConfig::Expressions {
                name,
                lower,
                upper,
                horizon,
                damping,
                nonlinearity,
                growth,
                u0,
                u1,
                exact,
            } => {
                let dom = BoxDomain::new(lower.clone(), upper.clone(), *horizon)?;
                ProblemSpec::from_expressions(name, dom, damping, nonlinearity, *growth, u0, u1, exact.as_deref())?
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub hidden: Vec<usize>,
    pub init: InitScheme,
    /// Enforced weight bound `R`; `None` leaves weights unconstrained.
    pub weight_bound: Option<f64>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            hidden: vec![80, 80],
            init: InitScheme::UniformFanIn,
            weight_bound: None,
        }
    }
}

impl ArchConfig {
    pub fn build(&self, spatial_dim: usize) -> Result<Architecture> {
        Ok(Architecture::for_problem(spatial_dim, &self.hidden, self.weight_bound)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMode {
    Lemma,
    Empirical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    pub mode: BoundMode,
    /// Keep the `Ĉ` term in the exponent.
    pub include_nonlinearity: bool,
    /// Node grid per axis for sampled norms.
    pub fd_nodes: usize,
    pub geometry: GeometryConstants,
    /// `‖u‖_{C^n}` for n = 0..3 when the problem has no exact solution.
    pub u_norms: Option<Vec<f64>>,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            mode: BoundMode::Lemma,
            include_nonlinearity: false,
            fd_nodes: 25,
            geometry: GeometryConstants::default(),
            u_norms: None,
        }
    }
}

/// One training-set size in a sweep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setting {
    pub label: String,
    pub counts: GridCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub architecture: ArchConfig,
    pub train: TrainConfig,
    /// Settings of a sweep; `train` uses the last one.
    pub settings: Vec<Setting>,
    /// Metric grid = `metric_factor` × training interior counts per axis.
    pub metric_factor: usize,
    pub bound: BoundConfig,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Seeds trained concurrently.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        crate::presets::preset("fig5-small").expect("built-in preset")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Applies `WAVEPINN_OUT` and `WAVEPINN_JOBS`.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(out) = std::env::var(ENV_OUT) {
            self.out = PathBuf::from(out);
        }
        if let Ok(jobs) = std::env::var(ENV_JOBS) {
            self.jobs = jobs.parse().with_context(|| format!("{ENV_JOBS}={jobs} is not a positive integer"))?;
        }
        Ok(())
    }

    /// Checks every precondition before any training starts.
    pub fn validate(&self) -> Result<ProblemSpec> {
        let problem = self.problem.build().context("problem")?;
        let d = problem.dim();
        self.architecture.build(d).context("architecture")?;
        self.train.validate().context("train")?;
        if self.settings.is_empty() {
            bail!("settings: at least one collocation setting is required");
        }
        for s in &self.settings {
            s.counts.validate(d).with_context(|| format!("setting `{}`", s.label))?;
        }
        let mut labels: Vec<&str> = self.settings.iter().map(|s| s.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            bail!("settings: labels must be unique");
        }
        if self.metric_factor == 0 {
            bail!("metric_factor must be positive");
        }
        if self.seeds.is_empty() {
            bail!("seeds: at least one seed is required");
        }
        if self.jobs == 0 {
            bail!("jobs must be positive");
        }
        if self.bound.fd_nodes < 5 {
            bail!("bound.fd_nodes must be at least 5");
        }
        self.bound.geometry.validate().context("bound.geometry")?;
        if self.bound.mode == BoundMode::Lemma && problem.exact.is_none() && self.bound.u_norms.is_none() {
            bail!("bound: lemma mode needs an exact solution or bound.u_norms");
        }
        Ok(problem)
    }

    /// The part of the config a cached seed report must agree with.
    pub fn fingerprint(&self, setting: &Setting) -> serde_json::Value {
        let mut v = self.train_fingerprint(setting);
        v["metric_factor"] = serde_json::json!(self.metric_factor);
        v["bound"] = serde_json::json!(self.bound);
        v
    }

    /// The part of the config a cached training record must agree with.
    pub fn train_fingerprint(&self, setting: &Setting) -> serde_json::Value {
        serde_json::json!({
            "problem": self.problem,
            "architecture": self.architecture,
            "train": self.train,
            "counts": setting.counts,
        })
    }
}

/// Parses `a..b` (exclusive) or a comma list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().context("seed range start")?;
        let b: u64 = b.trim().parse().context("seed range end")?;
        if b <= a {
            bail!("empty seed range {s}");
        }
        return Ok((a..b).collect());
    }
    let seeds = s
        .split(',')
        .map(|x| x.trim().parse::<u64>().with_context(|| format!("seed `{x}`")))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        bail!("no seeds in `{s}`");
    }
    Ok(seeds)
}
