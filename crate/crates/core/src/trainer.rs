//! Full-batch L-BFGS with a strong Wolfe line search.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{PinnError, Result};
use crate::net::MlpParams;
use crate::problem::ProblemSpec;
use crate::quadrature::CollocationSets;
use crate::residual::loss_and_gradient;

/// Optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_iterations: usize,
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    /// Stop once `max |∇E_T²| <= grad_tol`.
    pub grad_tol: f64,
    /// Stop once the loss dropped by less than `loss_rel_tol` (relative)
    /// over the last `stagnation_window` iterations.
    pub loss_rel_tol: f64,
    pub stagnation_window: usize,
    /// Keep every `history_stride`-th loss in the record (the final one is always kept).
    pub history_stride: usize,
    pub max_line_search_evals: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            memory: 10,
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 1e-9,
            loss_rel_tol: 1e-12,
            stagnation_window: 10,
            history_stride: 1,
            max_line_search_evals: 60,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(PinnError::Config(format!(
                "Wolfe constants must satisfy 0 < c1 < c2 < 1, got c1={}, c2={}",
                self.c1, self.c2
            )));
        }
        if self.memory == 0 {
            return Err(PinnError::Config("L-BFGS memory must be at least 1".into()));
        }
        if self.history_stride == 0 || self.stagnation_window == 0 || self.max_line_search_evals == 0 {
            return Err(PinnError::Config(
                "history_stride, stagnation_window and max_line_search_evals must be positive".into(),
            ));
        }
        if !(self.grad_tol >= 0.0 && self.loss_rel_tol >= 0.0) {
            return Err(PinnError::Config("tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    IterationCap,
    GradientTolerance,
    LossStagnation,
    LineSearchFailure,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::IterationCap => "iteration-cap",
            Termination::GradientTolerance => "gradient-tolerance",
            Termination::LossStagnation => "loss-stagnation",
            Termination::LineSearchFailure => "line-search-failure",
        }
    }
}

/// Outcome of a training run; serializes to the JSON checkpoint format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub params: MlpParams,
    pub iterations: usize,
    pub evaluations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// `(iteration, loss)` pairs; iteration 0 is the starting point.
    pub loss_history: Vec<(usize, f64)>,
    pub termination: Termination,
    pub seed: u64,
    pub wall_seconds: f64,
}

impl TrainRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Equality on everything except the timing field.
    pub fn same_outcome(&self, other: &TrainRecord) -> bool {
        let mut a = self.clone();
        a.wall_seconds = other.wall_seconds;
        &a == other
    }
}

/// One stored `(s, y)` pair with `ρ = 1/(sᵀy)`.
#[derive(Clone, Debug)]
pub struct CurvaturePair {
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    rho: f64,
}

impl CurvaturePair {
    /// `None` unless `sᵀy > 0`.
    pub fn new(s: Vec<f64>, y: Vec<f64>) -> Option<Self> {
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        (sy > f64::EPSILON * yy.sqrt() * norm2(&s) && sy.is_finite()).then(|| Self { s, y, rho: 1.0 / sy })
    }
}

/// Two-loop recursion. Pairs are ordered oldest first.
pub fn lbfgs_direction(history: &[CurvaturePair], grad: &[f64]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alpha = vec![0.0; history.len()];
    for (i, pair) in history.iter().enumerate().rev() {
        alpha[i] = pair.rho * dot(&pair.s, &q);
        axpy(-alpha[i], &pair.y, &mut q);
    }
    if let Some(last) = history.last() {
        let gamma = 1.0 / (last.rho * dot(&last.y, &last.y));
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (i, pair) in history.iter().enumerate() {
        let beta = pair.rho * dot(&pair.y, &q);
        axpy(alpha[i] - beta, &pair.s, &mut q);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LineSearchOutcome {
    /// Strong Wolfe step. The accepted point is always the last one evaluated.
    Accepted { step: f64, value: f64, slope: f64, evals: usize },
    Failed { evals: usize },
}

/// Strong Wolfe line search (bracketing + zoom with safeguarded cubic
/// interpolation). `phi(α)` returns `(φ(α), φ'(α))`; non-finite values are
/// treated as `+∞`.
pub fn wolfe_line_search<F>(
    mut phi: F,
    phi0: f64,
    dphi0: f64,
    initial_step: f64,
    c1: f64,
    c2: f64,
    max_evals: usize,
) -> Result<LineSearchOutcome>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    if !(dphi0 < 0.0) {
        return Err(PinnError::Contract(format!(
            "line search needs a descent direction, got directional derivative {dphi0}"
        )));
    }
    if !(initial_step > 0.0 && initial_step.is_finite()) {
        return Err(PinnError::Contract(format!("initial step must be positive, got {initial_step}")));
    }
    let mut evals = 0;
    let mut eval = |a: f64, evals: &mut usize| -> Result<(f64, f64)> {
        *evals += 1;
        let (v, d) = phi(a)?;
        Ok(if v.is_finite() && d.is_finite() { (v, d) } else { (f64::INFINITY, f64::NAN) })
    };
    let armijo = |a: f64, v: f64| v <= phi0 + c1 * a * dphi0;
    let curvature = |d: f64| d.abs() <= -c2 * dphi0;

    let (mut a_prev, mut v_prev, mut d_prev) = (0.0, phi0, dphi0);
    let mut a = initial_step;
    let (lo, hi);
    loop {
        if evals >= max_evals {
            return Ok(LineSearchOutcome::Failed { evals });
        }
        let (v, d) = eval(a, &mut evals)?;
        if !armijo(a, v) || (evals > 1 && v >= v_prev) {
            lo = (a_prev, v_prev, d_prev);
            hi = (a, v, d);
            break;
        }
        if curvature(d) {
            return Ok(LineSearchOutcome::Accepted { step: a, value: v, slope: d, evals });
        }
        if d >= 0.0 {
            lo = (a, v, d);
            hi = (a_prev, v_prev, d_prev);
            break;
        }
        (a_prev, v_prev, d_prev) = (a, v, d);
        a *= 2.0;
    }

    let (mut lo, mut hi) = (lo, hi);
    loop {
        if evals >= max_evals || (hi.0 - lo.0).abs() <= f64::EPSILON * lo.0.abs().max(1e-300) {
            return Ok(LineSearchOutcome::Failed { evals });
        }
        let a = zoom_trial(lo, hi);
        let (v, d) = eval(a, &mut evals)?;
        if !armijo(a, v) || v >= lo.1 {
            hi = (a, v, d);
            continue;
        }
        if curvature(d) {
            return Ok(LineSearchOutcome::Accepted { step: a, value: v, slope: d, evals });
        }
        if d * (hi.0 - lo.0) >= 0.0 {
            hi = lo;
        }
        lo = (a, v, d);
    }
}

/// Cubic interpolation minimizer in the interval spanned by `lo` and `hi`,
/// kept at least 10% away from both ends; bisection if the cubic is unusable.
fn zoom_trial(lo: (f64, f64, f64), hi: (f64, f64, f64)) -> f64 {
    let (a, fa, da) = lo;
    let (b, fb, db) = hi;
    let (left, right) = (a.min(b), a.max(b));
    let margin = 0.1 * (right - left);
    let mid = 0.5 * (a + b);
    if !(fa.is_finite() && fb.is_finite() && da.is_finite() && db.is_finite()) {
        return mid;
    }
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    if t.is_finite() && t >= left + margin && t <= right - margin {
        t
    } else {
        mid
    }
}

/// Result of [`minimize`].
#[derive(Clone, Debug, PartialEq)]
pub struct MinimizeOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub history: Vec<(usize, f64)>,
    pub termination: Termination,
}

/// L-BFGS on an arbitrary smooth objective. `objective(x, grad)` returns the
/// value and writes the gradient. `observer(iteration, value)` is called
/// after every accepted step.
pub fn minimize<F>(
    x0: Vec<f64>,
    mut objective: F,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(usize, f64),
) -> Result<MinimizeOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    cfg.validate()?;
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g)?;
    let mut evaluations = 1;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(PinnError::NonFinite {
            quantity: "loss at initial parameters".into(),
            stratum: "all".into(),
            point: vec![],
        });
    }
    let initial_value = f;
    let mut history = vec![(0, f)];
    let mut recent: VecDeque<f64> = VecDeque::from([f]);
    let mut pairs: VecDeque<CurvaturePair> = VecDeque::with_capacity(cfg.memory);
    let mut restarted = false;
    let mut iter = 0;
    let mut x_trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];

    let termination = loop {
        if max_abs(&g) <= cfg.grad_tol {
            break Termination::GradientTolerance;
        }
        if iter >= cfg.max_iterations {
            break Termination::IterationCap;
        }

        let (mut dir, mut dphi0) = {
            let d = lbfgs_direction(pairs.make_contiguous(), &g);
            let s = dot(&d, &g);
            if s < 0.0 && s.is_finite() {
                (d, s)
            } else {
                pairs.clear();
                let d: Vec<f64> = g.iter().map(|v| -v).collect();
                let s = dot(&d, &g);
                (d, s)
            }
        };
        let outcome = loop {
            let step0 = if pairs.is_empty() { (1.0 / norm2(&g)).min(1.0) } else { 1.0 };
            let out = wolfe_line_search(
                |a| {
                    for ((xt, xi), di) in x_trial.iter_mut().zip(&x).zip(&dir) {
                        *xt = xi + a * di;
                    }
                    let v = objective(&x_trial, &mut g_trial)?;
                    Ok((v, dot(&g_trial, &dir)))
                },
                f,
                dphi0,
                step0,
                cfg.c1,
                cfg.c2,
                cfg.max_line_search_evals,
            )?;
            match out {
                LineSearchOutcome::Failed { evals } if !restarted => {
                    evaluations += evals;
                    restarted = true;
                    pairs.clear();
                    dir = g.iter().map(|v| -v).collect();
                    dphi0 = dot(&dir, &g);
                }
                _ => break out,
            }
        };
        let (value, evals) = match outcome {
            LineSearchOutcome::Accepted { value, evals, .. } => (value, evals),
            LineSearchOutcome::Failed { evals } => {
                evaluations += evals;
                break Termination::LineSearchFailure;
            }
        };
        evaluations += evals;
        restarted = false;
        iter += 1;

        // The accepted point is the last one evaluated, so x_trial / g_trial hold it.
        let s: Vec<f64> = x_trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
        std::mem::swap(&mut x, &mut x_trial);
        std::mem::swap(&mut g, &mut g_trial);
        f = value;
        if let Some(pair) = CurvaturePair::new(s, y) {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back(pair);
        }

        observer(iter, f);
        if iter % cfg.history_stride == 0 {
            history.push((iter, f));
        }
        recent.push_back(f);
        if recent.len() > cfg.stagnation_window + 1 {
            recent.pop_front();
        }
        if recent.len() == cfg.stagnation_window + 1 {
            let old = recent[0];
            if old - f <= cfg.loss_rel_tol * f.abs().max(f64::MIN_POSITIVE) {
                break Termination::LossStagnation;
            }
        }
    };
    if history.last().map(|h| h.0) != Some(iter) {
        history.push((iter, f));
    }
    Ok(MinimizeOutcome {
        x,
        value: f,
        initial_value,
        iterations: iter,
        evaluations,
        history,
        termination,
    })
}

/// Minimizes `E_T(θ, S)²` starting from `params0`.
pub fn train(params0: &MlpParams, sets: &CollocationSets, problem: &ProblemSpec, cfg: &TrainConfig) -> Result<TrainRecord> {
    train_with_observer(params0, sets, problem, cfg, &mut |_, _| {})
}

pub fn train_with_observer(
    params0: &MlpParams,
    sets: &CollocationSets,
    problem: &ProblemSpec,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(usize, f64),
) -> Result<TrainRecord> {
    if params0.architecture().input_dim() != problem.dim() + 1 {
        return Err(PinnError::Config(format!(
            "network takes {} inputs, problem needs {}",
            params0.architecture().input_dim(),
            problem.dim() + 1
        )));
    }
    if params0.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(PinnError::NonFinite {
            quantity: "initial parameters".into(),
            stratum: "all".into(),
            point: vec![],
        });
    }
    let start = Instant::now();
    let mut work = params0.clone();
    let out = minimize(
        params0.as_slice().to_vec(),
        |x, grad| {
            work.as_mut_slice().copy_from_slice(x);
            let (loss, g) = loss_and_gradient(&work, sets, problem)?;
            grad.copy_from_slice(&g);
            Ok(loss)
        },
        cfg,
        observer,
    )?;
    let params = MlpParams::from_flat(params0.architecture().clone(), out.x)?;
    Ok(TrainRecord {
        params,
        iterations: out.iterations,
        evaluations: out.evaluations,
        initial_loss: out.initial_value,
        final_loss: out.value,
        loss_history: out.history,
        termination: out.termination,
        seed: cfg.seed,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
