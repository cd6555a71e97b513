//! Per-seed training pipeline, aggregation over seeds and sweeps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{anyhow, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use wavepinn_core::bounds::{empirical_ledger, lemma_ledger};
use wavepinn_core::metrics::metric_counts;
use wavepinn_core::quadrature::StrataSizes;
use wavepinn_core::residual::TrainingErrorReport;
use wavepinn_core::{
    build_sets, posterior_bound, total_error_h1, train, BoundReport, CollocationSets, H1Error, MlpParams, ProblemSpec,
    TrainRecord,
};

use crate::config::{BoundMode, RunConfig, Setting};

/// Everything produced for one seed of one setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub setting: String,
    pub fingerprint: serde_json::Value,
    pub sizes: StrataSizes,
    pub initial_training: TrainingErrorReport,
    pub training: TrainingErrorReport,
    /// `None` without an exact solution.
    pub l2_error: Option<f64>,
    pub h1: Option<H1Error>,
    pub bound: BoundReport,
    pub record: TrainRecord,
}

impl SeedReport {
    pub fn path(dir: &Path, seed: u64) -> PathBuf {
        dir.join(format!("seed-{seed}.json"))
    }
}

/// Training errors, total errors and the bound for given parameters.
pub struct Evaluation {
    pub training: TrainingErrorReport,
    pub l2_error: Option<f64>,
    pub h1: Option<H1Error>,
    pub bound: BoundReport,
}

pub fn evaluate(params: &MlpParams, sets: &CollocationSets, problem: &ProblemSpec, cfg: &RunConfig, mode: BoundMode) -> Result<Evaluation> {
    let training = wavepinn_core::training_error(params, sets, problem).context("training error")?;
    let (l2_error, h1) = if problem.exact.is_some() {
        let h1 = total_error_h1(params, problem, &metric_counts(&sets.counts, cfg.metric_factor)).context("total error")?;
        (Some(h1.l2()), Some(h1))
    } else {
        (None, None)
    };
    let b = &cfg.bound;
    let ledger = match mode {
        BoundMode::Empirical => empirical_ledger(params, problem, &b.geometry, b.fd_nodes),
        BoundMode::Lemma => lemma_ledger(params, problem, &b.geometry, b.u_norms.as_deref()),
    }
    .context("bound constants")?;
    let bound = posterior_bound(&training, sets, &ledger, b.include_nonlinearity).context("bound")?;
    Ok(Evaluation { training, l2_error, h1, bound })
}

pub fn train_seed(cfg: &RunConfig, problem: &ProblemSpec, setting: &Setting, sets: &CollocationSets, seed: u64) -> Result<CachedTraining> {
    let arch = cfg.architecture.build(problem.dim())?;
    let params0 = MlpParams::init(&arch, seed, cfg.architecture.init).context("init")?;
    let initial_training = wavepinn_core::training_error(&params0, sets, problem).context("initial training error")?;
    let train_cfg = wavepinn_core::TrainConfig { seed, ..cfg.train.clone() };
    let record = train(&params0, sets, problem, &train_cfg).context("train")?;
    Ok(CachedTraining { fingerprint: cfg.train_fingerprint(setting), initial_training, record })
}

pub fn evaluate_seed(cfg: &RunConfig, problem: &ProblemSpec, setting: &Setting, sets: &CollocationSets, seed: u64, t: CachedTraining) -> Result<SeedReport> {
    let ev = evaluate(&t.record.params, sets, problem, cfg, cfg.bound.mode)?;
    Ok(SeedReport {
        seed,
        setting: setting.label.clone(),
        fingerprint: cfg.fingerprint(setting),
        sizes: sets.sizes(),
        initial_training: t.initial_training,
        training: ev.training,
        l2_error: ev.l2_error,
        h1: ev.h1,
        bound: ev.bound,
        record: t.record,
    })
}

/// Cached report, else cached training plus a fresh evaluation, else a full run.
pub fn seed_report(cfg: &RunConfig, problem: &ProblemSpec, setting: &Setting, sets: &CollocationSets, dir: &Path, seed: u64) -> Result<SeedReport> {
    let fp = cfg.fingerprint(setting);
    let path = SeedReport::path(dir, seed);
    if let Some(r) = load_cached(&path, &fp, |r: &SeedReport| &r.fingerprint) {
        info!("{} seed {seed}: cached", setting.label);
        return Ok(r);
    }
    let tpath = CachedTraining::path(dir, seed);
    let training = match load_cached(&tpath, &cfg.train_fingerprint(setting), |r: &CachedTraining| &r.fingerprint) {
        Some(t) => {
            info!("{} seed {seed}: cached training, evaluating", setting.label);
            t
        }
        None => {
            info!("{} seed {seed}: training on {} points", setting.label, setting.counts.total_points());
            let t = train_seed(cfg, problem, setting, sets, seed)?;
            write_json(&tpath, &t)?;
            t
        }
    };
    let r = evaluate_seed(cfg, problem, setting, sets, seed, training)?;
    write_json(&path, &r)?;
    info!(
        "{} seed {seed}: {} iterations, E_T {:.3e}, L2 {:.3e}, bound {:.3e}, {:.0}s",
        setting.label,
        r.record.iterations,
        r.training.total,
        r.l2_error.unwrap_or(f64::NAN),
        r.bound.bound_value,
        r.record.wall_seconds
    );
    Ok(r)
}

fn load_cached<T: for<'de> Deserialize<'de>>(path: &Path, fingerprint: &serde_json::Value, get: impl Fn(&T) -> &serde_json::Value) -> Option<T> {
    let text = std::fs::read_to_string(path).ok()?;
    match serde_json::from_str::<T>(&text) {
        Ok(r) if get(&r) == fingerprint => Some(r),
        Ok(_) => {
            warn!("{} was produced by a different config; recomputing", path.display());
            None
        }
        Err(e) => {
            warn!("{} is unreadable ({e}); recomputing", path.display());
            None
        }
    }
}

/// Cached training outcome; evaluation is redone when only the evaluation settings change.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CachedTraining {
    pub fingerprint: serde_json::Value,
    pub initial_training: TrainingErrorReport,
    pub record: TrainRecord,
}

impl CachedTraining {
    pub fn path(dir: &Path, seed: u64) -> PathBuf {
        dir.join(format!("train-seed-{seed}.json"))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(with = "wavepinn_core::serde_ext")]
    pub mean: f64,
    #[serde(with = "wavepinn_core::serde_ext")]
    pub min: f64,
    #[serde(with = "wavepinn_core::serde_ext")]
    pub max: f64,
}

impl Aggregate {
    /// Values must already be in seed order; the reduction order is fixed.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        Self {
            mean: values.iter().sum::<f64>() / n,
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Metric names in report and CSV order.
pub const METRICS: [&str; 16] = [
    "E_T", "E_pde_sq", "E_su_sq", "E_sut_sq", "E_u0_sq", "E_u1_sq", "E_grad_sq", "initial_E_T", "l2_error", "h1_quantity",
    "h1_norm", "bound", "log10_bound", "log10_bound_over_l2", "iterations", "final_loss",
];

fn metric_values(r: &SeedReport) -> [f64; 16] {
    let t = &r.training;
    let nan = f64::NAN;
    let l2 = r.l2_error.unwrap_or(nan);
    [
        t.total,
        t.pde,
        t.su,
        t.sut,
        t.u0,
        t.u1,
        t.grad,
        r.initial_training.total,
        l2,
        r.h1.map_or(nan, |h| h.sum),
        r.h1.map_or(nan, |h| h.norm()),
        r.bound.bound_value,
        r.bound.log10_bound,
        r.bound.log10_bound - l2.log10(),
        r.record.iterations as f64,
        r.record.final_loss,
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub train_seconds: Aggregate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub setting: Setting,
    pub sizes: StrataSizes,
    pub bound_mode: BoundMode,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, Aggregate>,
    pub terminations: Vec<String>,
    /// Wall-clock data; excluded from reproducibility comparisons.
    pub timing: Timing,
}

impl RunReport {
    pub fn from_seeds(setting: &Setting, mode: BoundMode, reports: &[SeedReport]) -> Self {
        let rows: Vec<[f64; 16]> = reports.iter().map(metric_values).collect();
        let metrics = METRICS
            .iter()
            .enumerate()
            .map(|(j, name)| (name.to_string(), Aggregate::of(&rows.iter().map(|r| r[j]).collect::<Vec<_>>())))
            .collect();
        let secs: Vec<f64> = reports.iter().map(|r| r.record.wall_seconds).collect();
        Self {
            setting: setting.clone(),
            sizes: reports.first().map(|r| r.sizes).unwrap_or(StrataSizes { m_pde: 0, m_s: 0, m_t: 0 }),
            bound_mode: mode,
            seeds: reports.iter().map(|r| r.seed).collect(),
            metrics,
            terminations: reports.iter().map(|r| r.record.termination.name().to_string()).collect(),
            timing: Timing { train_seconds: Aggregate::of(&secs) },
        }
    }

    pub fn metric(&self, name: &str) -> Aggregate {
        self.metrics[name]
    }
}

/// Trains (or loads cached) seeds of one setting, writes per-seed and aggregate reports.
pub fn run_setting(cfg: &RunConfig, problem: &ProblemSpec, setting: &Setting) -> Result<(RunReport, Vec<SeedReport>)> {
    let dir = cfg.out.join(&setting.label);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let sets = build_sets(&problem.domain, &setting.counts).with_context(|| format!("setting `{}`: collocation", setting.label))?;

    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let queue = Mutex::new(seeds.clone().into_iter());
    let results: Mutex<BTreeMap<u64, Result<SeedReport>>> = Mutex::new(BTreeMap::new());
    let worker = || loop {
        let Some(seed) = queue.lock().expect("queue").next() else { break };
        let res = seed_report(cfg, problem, setting, &sets, &dir, seed);
        results.lock().expect("results").insert(seed, res.with_context(|| format!("setting `{}` seed {seed}", setting.label)));
    };
    std::thread::scope(|s| {
        for _ in 0..cfg.jobs.min(seeds.len()).max(1) {
            s.spawn(worker);
        }
    });
    let reports = results
        .into_inner()
        .map_err(|_| anyhow!("worker panicked"))?
        .into_values()
        .collect::<Result<Vec<_>>>()?;
    let report = RunReport::from_seeds(setting, cfg.bound.mode, &reports);
    write_json(&dir.join("report.json"), &report)?;
    let mut w = csv_writer(&dir.join("report.csv"))?;
    write_sweep_rows(&mut w, &report)?;
    w.flush()?;
    Ok((report, reports))
}

/// CSV header shared by `report.csv` and `sweep.csv`.
pub fn sweep_header() -> Vec<String> {
    let mut h: Vec<String> = ["setting", "aggregate", "M_total", "M_PDE", "M_s", "M_t"].iter().map(|s| s.to_string()).collect();
    h.extend(METRICS.iter().map(|s| s.to_string()));
    h.push("train_seconds".into());
    h
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(sweep_header())?;
    Ok(w)
}

fn write_sweep_rows<W: std::io::Write>(w: &mut csv::Writer<W>, r: &RunReport) -> Result<()> {
    for (agg, pick) in [("mean", 0usize), ("min", 1), ("max", 2)] {
        let get = |a: &Aggregate| [a.mean, a.min, a.max][pick];
        let mut row = vec![
            r.setting.label.clone(),
            agg.to_string(),
            r.sizes.total().to_string(),
            r.sizes.m_pde.to_string(),
            r.sizes.m_s.to_string(),
            r.sizes.m_t.to_string(),
        ];
        row.extend(METRICS.iter().map(|m| format!("{:e}", get(&r.metrics[*m]))));
        row.push(format!("{:e}", get(&r.timing.train_seconds)));
        w.write_record(&row)?;
    }
    Ok(())
}

/// Runs every setting of the config and writes `sweep.csv`.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<RunReport>> {
    let problem = cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    write_json(&cfg.out.join("config.json"), cfg)?;
    let mut reports = Vec::new();
    for s in &cfg.settings {
        reports.push(run_setting(cfg, &problem, s)?.0);
    }
    let mut w = csv_writer(&cfg.out.join("sweep.csv"))?;
    for r in &reports {
        write_sweep_rows(&mut w, r)?;
    }
    w.flush()?;
    Ok(reports)
}

/// Runs the last setting only.
pub fn run(cfg: &RunConfig) -> Result<(RunReport, Vec<SeedReport>)> {
    let problem = cfg.validate()?;
    let setting = cfg.settings.last().expect("validated");
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    write_json(&cfg.out.join("config.json"), cfg)?;
    run_setting(cfg, &problem, setting)
}
