//! The `bound`, `theory` and `export-points` verbs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wavepinn_core::metrics::pointwise_error_field;
use wavepinn_core::theory::{lambda_beta, write_rate_csv, LambdaBeta, ResidualBounds};
use wavepinn_core::{
    apriori_sizes, build_sets, q1_residual_bounds, q1_widths, rate_curves, BoxDomain, MlpParams, SizingPlan, TheoryInputs,
    TrainRecord,
};

use crate::config::{BoundMode, RunConfig};
use crate::pipeline::{evaluate, SeedReport};

/// Reads parameters from a seed report, a training record or a bare parameter file.
pub fn load_params(path: &Path) -> Result<MlpParams> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(r) = serde_json::from_str::<SeedReport>(&text) {
        return Ok(r.record.params);
    }
    if let Ok(r) = TrainRecord::from_json(&text) {
        return Ok(r.params);
    }
    MlpParams::from_json(&text).with_context(|| format!("{} holds no network parameters", path.display()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundOutput {
    pub setting: String,
    pub mode: BoundMode,
    pub training: wavepinn_core::TrainingErrorReport,
    pub l2_error: Option<f64>,
    pub h1: Option<wavepinn_core::H1Error>,
    pub bound: wavepinn_core::BoundReport,
}

/// Bound for stored parameters on the last setting of the config.
pub fn bound(cfg: &RunConfig, params_path: &Path, mode: BoundMode) -> Result<BoundOutput> {
    let problem = cfg.validate()?;
    let setting = cfg.settings.last().expect("validated");
    let params = load_params(params_path)?;
    let sets = build_sets(&problem.domain, &setting.counts).context("collocation")?;
    let ev = evaluate(&params, &sets, &problem, cfg, mode)?;
    let out = BoundOutput {
        setting: setting.label.clone(),
        mode,
        training: ev.training,
        l2_error: ev.l2_error,
        h1: ev.h1,
        bound: ev.bound,
    };
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(format!("bound-{}-{}.json", setting.label, serde_json::to_value(mode)?.as_str().unwrap_or("mode")));
    std::fs::write(&path, serde_json::to_string_pretty(&out)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub d: usize,
    pub k: f64,
    pub ns: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AprioriConfig {
    pub epsilon: f64,
    pub d: usize,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub inputs: TheoryInputs,
    /// Spatial domain for the trace constant; defaults to the enclosing box.
    pub domain: Option<BoxDomain>,
    pub a_inf: f64,
    pub semilinear: bool,
    pub rates: RatesConfig,
    pub apriori: Vec<AprioriConfig>,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            inputs: TheoryInputs::new(2, 4, 2, 6, 1.0, 0.5, vec![-1, -1], vec![1, 1]),
            domain: None,
            a_inf: 0.0,
            semilinear: false,
            rates: RatesConfig { d: 2, k: 4.0, ns: (6..=64).collect() },
            apriori: vec![AprioriConfig { epsilon: 0.1, d: 1, k: 200 }],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TheoryOutput {
    pub widths: (u64, u64),
    pub lambdas: Option<Vec<LambdaBeta>>,
    pub residual_bounds: Option<ResidualBounds>,
    /// Why lambdas and residual bounds were skipped.
    pub skipped: Option<String>,
    pub sizing: Vec<SizingPlan>,
}

pub fn theory(cfg: &TheoryConfig, out: &Path) -> Result<TheoryOutput> {
    let inp = &cfg.inputs;
    let widths = q1_widths(inp).context("widths")?;
    let (lambdas, residual_bounds, skipped) = if inp.seminorm_hk1.is_some() && inp.w_inf.is_some() {
        let lambdas = (0..3).map(|l| lambda_beta(inp, l)).collect::<wavepinn_core::Result<Vec<_>>>().context("lambda")?;
        let domain = match &cfg.domain {
            Some(d) => d.clone(),
            None => BoxDomain::new(
                inp.box_lower.iter().map(|&a| a as f64).collect(),
                inp.box_upper.iter().map(|&b| b as f64).collect(),
                inp.horizon,
            )?,
        };
        let rb = q1_residual_bounds(inp, &domain, cfg.a_inf, cfg.semilinear).context("residual bounds")?;
        (Some(lambdas), Some(rb), None)
    } else {
        (None, None, Some("seminorm_hk1 and w_inf are required for λ_l and the residual bounds".to_string()))
    };
    let sizing = cfg
        .apriori
        .iter()
        .map(|a| apriori_sizes(a.epsilon, a.d, a.k).with_context(|| format!("a-priori sizing for ε = {}, d = {}, k = {}", a.epsilon, a.d, a.k)))
        .collect::<Result<Vec<_>>>()?;
    let rows = rate_curves(cfg.rates.d, cfg.rates.k, &cfg.rates.ns).context("rates")?;

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let f = std::fs::File::create(out.join("rates.csv")).context("writing rates.csv")?;
    write_rate_csv(&rows, std::io::BufWriter::new(f))?;
    let output = TheoryOutput { widths, lambdas, residual_bounds, skipped, sizing };
    std::fs::write(out.join("theory.json"), serde_json::to_string_pretty(&output)?).context("writing theory.json")?;
    Ok(output)
}

/// Writes collocation points of every setting and, given parameters, error fields at `t ∈ {0, T/2, T}`.
pub fn export_points(cfg: &RunConfig, params: Option<&Path>, nodes: usize) -> Result<Vec<PathBuf>> {
    let problem = cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let mut written = Vec::new();
    for s in &cfg.settings {
        let sets = build_sets(&problem.domain, &s.counts)?;
        let path = cfg.out.join(format!("points-{}.csv", s.label));
        let f = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        sets.write_csv(std::io::BufWriter::new(f))?;
        written.push(path);
    }
    if let Some(p) = params {
        if nodes < 2 {
            bail!("--nodes must be at least 2");
        }
        let net = load_params(p)?;
        let t_end = problem.domain.horizon;
        for t in [0.0, 0.5 * t_end, t_end] {
            let field = pointwise_error_field(&net, &problem, t, &vec![nodes; problem.dim()]).context("error field")?;
            let path = cfg.out.join(format!("error-t{t}.csv"));
            let f = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
            field.write_csv(std::io::BufWriter::new(f))?;
            written.push(path);
        }
    }
    Ok(written)
}
