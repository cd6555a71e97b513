//! Problem definitions: damping, nonlinearity, initial data and optional
//! exact solution of `u_tt - Δu + a(x) u_t + f(x, u) = 0` with homogeneous
//! Dirichlet data on a box.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::deriv::{JetBatch, JetField, JetPlan};
use crate::error::{PinnError, Result};
use crate::expr::{parse_aliased, Expr};
use crate::quadrature::BoxDomain;

/// Highest derivative order for which norms of exact solutions are cached.
pub const MAX_NORM_ORDER: usize = 3;

/// Variable names of a spatial dimension, followed by `extra` (e.g. `t` or `u`).
fn var_table(d: usize, extra: Option<&'static str>) -> Vec<(String, usize)> {
    const SHORT: [&str; 3] = ["x", "y", "z"];
    let mut v = Vec::new();
    for i in 0..d {
        if d <= 3 {
            v.push((SHORT[i].to_string(), i));
        }
        v.push((format!("x{}", i + 1), i));
    }
    if let Some(e) = extra {
        v.push((e.to_string(), d));
    }
    v
}

/// A parsed scalar expression over a fixed list of variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub source: String,
    pub arity: usize,
    pub expr: Expr,
}

impl Field {
    fn parse_with(src: &str, d: usize, extra: Option<&'static str>) -> Result<Self> {
        let table = var_table(d, extra);
        let refs: Vec<(&str, usize)> = table.iter().map(|(n, i)| (n.as_str(), *i)).collect();
        let expr = parse_aliased(src, &refs)?;
        Ok(Self {
            source: src.to_string(),
            arity: d + usize::from(extra.is_some()),
            expr,
        })
    }

    /// Function of `x` only.
    pub fn spatial(src: &str, d: usize) -> Result<Self> {
        Self::parse_with(src, d, None)
    }

    /// Function of `(x, t)`.
    pub fn spacetime(src: &str, d: usize) -> Result<Self> {
        Self::parse_with(src, d, Some("t"))
    }

    /// Function of `(x, u)`.
    pub fn state(src: &str, d: usize) -> Result<Self> {
        Self::parse_with(src, d, Some("u"))
    }

    pub fn constant(v: f64, arity: usize) -> Self {
        Self {
            source: v.to_string(),
            arity,
            expr: Expr::Num(v),
        }
    }

    pub fn eval(&self, args: &[f64]) -> f64 {
        self.expr.eval(args)
    }

    pub fn derivative(&self, var: usize) -> Self {
        Self {
            source: format!("d/d{var}({})", self.source),
            arity: self.arity,
            expr: self.expr.derivative(var),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.expr == Expr::Num(0.0)
    }
}

/// Growth data `(c, r)` with `|∂_u^j f| ≤ c |u|^{(r+1-j)+}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub c: f64,
    pub r: f64,
}

/// The semilinear term `f(x, u)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Nonlinearity {
    Zero,
    /// `|u|^p u`.
    Power { p: f64 },
    /// Expression in `(x, u)` with symbolic `∂f/∂u` and `∂²f/∂u²`.
    Expr { f: Field, df: Field, ddf: Field },
}

impl Nonlinearity {
    pub fn from_expr(src: &str, d: usize) -> Result<Self> {
        let f = Field::state(src, d)?;
        if f.is_zero() {
            return Ok(Self::Zero);
        }
        let df = f.derivative(d);
        let ddf = df.derivative(d);
        Ok(Self::Expr { f, df, ddf })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero)
    }

    /// `(f, ∂f/∂u)` at `(x, u)`.
    pub fn eval(&self, x: &[f64], u: f64) -> (f64, f64) {
        match self {
            Nonlinearity::Zero => (0.0, 0.0),
            Nonlinearity::Power { p } => {
                let a = u.abs();
                let ap = if *p == 0.0 { 1.0 } else { a.powf(*p) };
                (ap * u, (p + 1.0) * ap)
            }
            Nonlinearity::Expr { f, df, .. } => {
                let args = state_args(x, u);
                (f.eval(&args), df.eval(&args))
            }
        }
    }

    /// `∂²f/∂u²` (zero at `u = 0` for the power family with `p < 1`, where it is singular).
    pub fn second_derivative(&self, x: &[f64], u: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Power { p } => {
                if u == 0.0 || *p == 0.0 {
                    0.0
                } else {
                    p * (p + 1.0) * u.abs().powf(p - 1.0) * u.signum()
                }
            }
            Nonlinearity::Expr { ddf, .. } => ddf.eval(&state_args(x, u)),
        }
    }
}

fn state_args(x: &[f64], u: f64) -> Vec<f64> {
    let mut v = x.to_vec();
    v.push(u);
    v
}

/// Exact solution with symbolic derivatives.
#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub u: Field,
    first: Vec<Expr>,
    second: Vec<Expr>,
    closed_form_norms: Option<fn(usize) -> f64>,
    norms: OnceLock<Vec<f64>>,
}

impl ExactSolution {
    pub fn new(u: Field) -> Self {
        let dim = u.arity;
        let first: Vec<Expr> = (0..dim).map(|i| u.expr.derivative(i)).collect();
        let second = first.iter().enumerate().map(|(i, e)| e.derivative(i)).collect();
        Self {
            u,
            first,
            second,
            closed_form_norms: None,
            norms: OnceLock::new(),
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.u.eval(z)
    }

    pub fn dt(&self, z: &[f64]) -> f64 {
        self.first[self.u.arity - 1].eval(z)
    }

    pub fn first(&self, z: &[f64], axis: usize) -> f64 {
        self.first[axis].eval(z)
    }

    pub fn second(&self, z: &[f64], axis: usize) -> f64 {
        self.second[axis].eval(z)
    }

    /// `‖u‖_{C^n}` over the space-time box, `n ≤ MAX_NORM_ORDER`.
    pub fn cn_norm(&self, domain: &BoxDomain, n: usize) -> Result<f64> {
        if n > MAX_NORM_ORDER {
            return Err(PinnError::Unsupported(format!("norms of order {n} > {MAX_NORM_ORDER}")));
        }
        let norms = self.norms.get_or_init(|| match self.closed_form_norms {
            Some(f) => (0..=MAX_NORM_ORDER).map(f).collect(),
            None => sampled_cn_norms(&self.u.expr, domain, MAX_NORM_ORDER, 41),
        });
        Ok(norms[n])
    }
}

impl JetField for ExactSolution {
    fn input_dim(&self) -> usize {
        self.u.arity
    }

    fn jets(&self, points: &[f64], plan: &JetPlan) -> Result<JetBatch> {
        let dim = self.u.arity;
        if plan.dim() != dim || points.len() % dim != 0 {
            return Err(PinnError::Contract("points do not match the exact solution's dimension".into()));
        }
        let nc = plan.components();
        let mut slots: Vec<Option<&Expr>> = vec![None; nc];
        slots[0] = Some(&self.u.expr);
        for axis in 0..dim {
            if let Some(c) = plan.first_index(axis) {
                slots[c] = Some(&self.first[axis]);
            }
            if let Some(c) = plan.second_index(axis) {
                slots[c] = Some(&self.second[axis]);
            }
        }
        let mut data = Vec::with_capacity(points.len() / dim * nc);
        for z in points.chunks(dim) {
            data.extend(slots.iter().map(|e| e.expect("every plan component has a field").eval(z)));
        }
        JetBatch::from_components(plan.clone(), data)
    }
}

/// Max over multi-indices `|α| ≤ n` of sampled `sup |D^α e|` on the
/// space-time box, for each `n ≤ max_order`.
pub fn sampled_cn_norms(e: &Expr, domain: &BoxDomain, max_order: usize, per_axis: usize) -> Vec<f64> {
    let mut lo = domain.lower.clone();
    lo.push(0.0);
    let mut hi = domain.upper.clone();
    hi.push(domain.horizon);
    sampled_cn_norms_on(e, &lo, &hi, max_order, per_axis)
}

/// As [`sampled_cn_norms`] on the box `Π [lo_i, hi_i]` (grid includes endpoints).
pub fn sampled_cn_norms_on(e: &Expr, lo: &[f64], hi: &[f64], max_order: usize, per_axis: usize) -> Vec<f64> {
    let dim = lo.len();
    let per_axis = per_axis.max(2);
    let grid: Vec<Vec<f64>> = (0..per_axis.pow(dim as u32))
        .map(|mut k| {
            let mut z = vec![0.0; dim];
            for j in (0..dim).rev() {
                let i = k % per_axis;
                k /= per_axis;
                z[j] = lo[j] + (hi[j] - lo[j]) * i as f64 / (per_axis - 1) as f64;
            }
            z
        })
        .collect();
    let sup = |e: &Expr| grid.iter().map(|z| e.eval(z).abs()).fold(0.0, f64::max);
    // Multi-indices enumerated as nondecreasing variable sequences.
    let mut out = vec![sup(e)];
    let mut frontier: Vec<(usize, Expr)> = vec![(0, e.clone())];
    for _ in 1..=max_order {
        let mut next = Vec::new();
        let mut best: f64 = *out.last().unwrap();
        for (min_var, f) in &frontier {
            for v in *min_var..dim {
                let g = f.derivative(v);
                best = best.max(sup(&g));
                next.push((v, g));
            }
        }
        out.push(best);
        frontier = next;
    }
    out
}

/// Problem data for the damped / semilinear wave equation.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: BoxDomain,
    /// `a(x)`.
    pub damping: Field,
    pub nonlinearity: Nonlinearity,
    pub growth: Growth,
    pub u0: Field,
    pub grad_u0: Vec<Field>,
    pub u1: Field,
    pub exact: Option<ExactSolution>,
    damping_norms: OnceLock<(f64, f64)>,
}

impl ProblemSpec {
    /// Builds a problem from expression strings. Spatial variables are
    /// `x, y, z` (for `d ≤ 3`) or `x1..xd`; time is `t`, the state is `u`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_expressions(
        name: &str,
        domain: BoxDomain,
        damping: &str,
        nonlinearity: &str,
        growth: Growth,
        u0: &str,
        u1: &str,
        exact: Option<&str>,
    ) -> Result<Self> {
        domain.validate()?;
        let d = domain.dim();
        check_dimension(d)?;
        let u0 = Field::spatial(u0, d)?;
        let p = Self {
            name: name.to_string(),
            damping: Field::spatial(damping, d)?,
            nonlinearity: Nonlinearity::from_expr(nonlinearity, d)?,
            growth,
            grad_u0: (0..d).map(|i| u0.derivative(i)).collect(),
            u0,
            u1: Field::spatial(u1, d)?,
            exact: exact.map(|s| Field::spacetime(s, d).map(ExactSolution::new)).transpose()?,
            domain,
            damping_norms: OnceLock::new(),
        };
        check_growth(d, growth, false)?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn damping_at(&self, x: &[f64]) -> f64 {
        self.damping.eval(x)
    }

    /// `(‖a‖_{L∞}, ‖a‖_{C²})`, sampled.
    pub fn damping_norms(&self) -> (f64, f64) {
        *self.damping_norms.get_or_init(|| {
            let per_axis = if self.dim() <= 2 { 101 } else { 15 };
            let n = sampled_cn_norms_on(&self.damping.expr, &self.domain.lower, &self.domain.upper, 2, per_axis);
            (n[0], n[2])
        })
    }

    /// `u_tt - Δu + a u_t + f(x, u)` of the exact solution at `z = (x, t)`.
    pub fn exact_pde_check(&self, z: &[f64]) -> Result<f64> {
        let ex = self
            .exact
            .as_ref()
            .ok_or_else(|| PinnError::Unsupported(format!("problem `{}` has no exact solution", self.name)))?;
        let d = self.dim();
        if z.len() != d + 1 {
            return Err(PinnError::Contract("point dimension mismatch".into()));
        }
        let lap: f64 = (0..d).map(|i| ex.second(z, i)).sum();
        let u = ex.value(z);
        let (f, _) = self.nonlinearity.eval(&z[..d], u);
        Ok(ex.second(z, d) - lap + self.damping_at(&z[..d]) * ex.dt(z) + f)
    }
}

fn check_dimension(d: usize) -> Result<()> {
    if !(1..=5).contains(&d) {
        return Err(PinnError::Config(format!("spatial dimension {d} outside 1..=5")));
    }
    Ok(())
}

/// Upper limit on `r` for the dimension, if any, and whether it is attained.
fn r_upper(d: usize) -> Option<f64> {
    match d {
        1 | 2 => None,
        3 | 4 => Some((d as f64 + 2.0) / (d as f64 - 2.0)),
        _ => Some(2.0),
    }
}

fn check_growth(d: usize, g: Growth, strict_lower: bool) -> Result<()> {
    if !(g.c >= 0.0 && g.c.is_finite()) || !g.r.is_finite() || g.r < 0.0 {
        return Err(PinnError::Config("growth data requires finite c ≥ 0 and r ≥ 0".into()));
    }
    if let Some(hi) = r_upper(d) {
        if g.r >= hi {
            return Err(PinnError::Config(format!("growth exponent r = {} must be below {hi} for d = {d}", g.r)));
        }
    }
    if strict_lower && g.r < 1.0 {
        return Err(PinnError::Config(format!("growth exponent r = {} below 1", g.r)));
    }
    Ok(())
}

fn damped_wave_norm(n: usize) -> f64 {
    // u = g(t) cos(πx) cos(πy) with g^{(k)}(t) = √2 (√2π)^k e^{-πt} sin(πt + π/4 + 3kπ/4);
    // sup over x of |∂^j cos(πx)| is π^j on [-1/2, 1/2].
    let steps = 40_000;
    let sup_g: Vec<f64> = (0..=n)
        .map(|k| {
            (0..=steps)
                .map(|i| {
                    let t = 0.5 * i as f64 / steps as f64;
                    let phase = PI * t + FRAC_PI_4 + 3.0 * k as f64 * FRAC_PI_4;
                    (SQRT_2 * (SQRT_2 * PI).powi(k as i32) * (-PI * t).exp() * phase.sin()).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    (0..=n)
        .flat_map(|m| (0..=m).map(move |kt| (m, kt)))
        .map(|(m, kt)| sup_g[kt] * PI.powi((m - kt) as i32))
        .fold(0.0, f64::max)
}

/// Damped wave on `[-1/2, 1/2]² × [0, 1/2]` with `a = 2π`, `f = 0`,
/// `u0 = cos(πx)cos(πy)`, `u1 = 0`.
pub fn damped_wave_problem() -> ProblemSpec {
    let domain = BoxDomain::cube(2, -0.5, 0.5, 0.5).expect("static box");
    let mut p = ProblemSpec::from_expressions(
        "damped-wave",
        domain,
        "2*pi",
        "0",
        Growth { c: 0.0, r: 1.0 },
        "cos(pi*x)*cos(pi*y)",
        "0",
        Some("exp(-pi*t)*(cos(pi*t) + sin(pi*t))*cos(pi*x)*cos(pi*y)"),
    )
    .expect("static problem definition");
    if let Some(ex) = p.exact.as_mut() {
        ex.closed_form_norms = Some(damped_wave_norm);
    }
    p
}

/// `f(x, u) = |u|^p u` with growth data `r = p`, `c = p + 1`.
pub fn semilinear_power_problem(p: f64, domain: BoxDomain, damping: &str, u0: &str, u1: &str) -> Result<ProblemSpec> {
    if !(p >= 0.0 && p.is_finite()) {
        return Err(PinnError::Config("power p must be finite and ≥ 0".into()));
    }
    let mut spec = ProblemSpec::from_expressions(
        &format!("semilinear-power-{p}"),
        domain,
        damping,
        "0",
        Growth { c: p + 1.0, r: p },
        u0,
        u1,
        None,
    )?;
    spec.nonlinearity = Nonlinearity::Power { p };
    Ok(spec)
}

/// Outcome of sampling the structural assumptions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub damping_min: f64,
    pub damping_nonnegative: bool,
    /// Worst `|∂_u^j f| / (c |u|^{(r+1-j)+})` for `j = 0, 1, 2`.
    pub growth_ratios: [f64; 3],
    pub growth_ok: bool,
    pub r_in_range: bool,
    /// `max |u0|` on `∂Ω` (compatibility with homogeneous Dirichlet data).
    pub u0_boundary_max: f64,
    pub violations: Vec<String>,
}

impl AssumptionReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples `a ≥ 0` on a grid of `per_axis` points per axis and the growth
/// bounds on `(x, u)` with `u ∈ [-u_max, u_max]`.
pub fn validate_assumptions(problem: &ProblemSpec, per_axis: usize, u_max: f64) -> AssumptionReport {
    let d = problem.dim();
    let per_axis = per_axis.max(2);
    let dom = &problem.domain;
    let n = per_axis.pow(d as u32);
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|mut k| {
            let mut x = vec![0.0; d];
            for j in (0..d).rev() {
                let i = k % per_axis;
                k /= per_axis;
                x[j] = dom.lower[j] + (dom.upper[j] - dom.lower[j]) * i as f64 / (per_axis - 1) as f64;
            }
            x
        })
        .collect();
    let mut violations = Vec::new();

    let damping_min = xs.iter().map(|x| problem.damping_at(x)).fold(f64::INFINITY, f64::min);
    let damping_nonnegative = damping_min >= 0.0;
    if !damping_nonnegative {
        violations.push(format!("damping a(x) takes the negative value {damping_min}"));
    }

    let Growth { c, r } = problem.growth;
    let mut ratios = [0.0f64; 3];
    let us: Vec<f64> = (1..=40).map(|i| u_max * i as f64 / 40.0).flat_map(|u| [u, -u]).collect();
    for x in &xs {
        for &u in &us {
            let (f, df) = problem.nonlinearity.eval(x, u);
            let ddf = problem.nonlinearity.second_derivative(x, u);
            for (j, v) in [f, df, ddf].into_iter().enumerate() {
                let cap = c * u.abs().powf((r + 1.0 - j as f64).max(0.0));
                let ratio = if cap > 0.0 {
                    v.abs() / cap
                } else if v == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                ratios[j] = ratios[j].max(ratio);
            }
        }
    }
    let growth_ok = ratios.iter().all(|&q| q <= 1.0 + 1e-12);
    if !growth_ok {
        violations.push(format!("growth bound exceeded, worst ratios {ratios:?}"));
    }

    let r_in_range = problem.nonlinearity.is_zero() || check_growth(d, problem.growth, true).is_ok();
    if !r_in_range {
        violations.push(format!("growth exponent r = {r} outside the admissible range for d = {d}"));
    }

    let u0_boundary_max = xs
        .iter()
        .filter(|x| (0..d).any(|i| x[i] == dom.lower[i] || x[i] == dom.upper[i]))
        .map(|x| problem.u0.eval(x).abs())
        .fold(0.0, f64::max);
    if u0_boundary_max > 1e-10 {
        violations.push(format!("u0 does not vanish on the boundary (max {u0_boundary_max})"));
    }

    AssumptionReport {
        damping_min,
        damping_nonnegative,
        growth_ratios: ratios,
        growth_ok,
        r_in_range,
        u0_boundary_max,
        violations,
    }
}
