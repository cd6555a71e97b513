//! A-posteriori and residual-based bounds on `∫|û|² + ∫|û_t|²` and their constants.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::deriv::{JetField, JetPlan};
use crate::error::{PinnError, Result};
use crate::net::{ActivationNormTable, MlpParams, NetworkClass};
use crate::problem::{Nonlinearity, ProblemSpec};
use crate::quadrature::{BoxDomain, CollocationSets, Stratum};
use crate::residual::{residuals_on, ResidualVector, TrainingErrorReport};

/// `diam(Ω)/π`, valid for convex domains.
pub fn poincare_constant(domain: &BoxDomain) -> f64 {
    domain.diameter() / PI
}

/// `√(2·max{2h, d+1}/ρ)` with `h` the diameter and `ρ` the inradius of `Ω × [0, T]`.
pub fn trace_constant(domain: &BoxDomain) -> f64 {
    let h = domain.spacetime_diameter();
    let rho = domain.spacetime_inradius();
    (2.0 * (2.0 * h).max((domain.dim() + 1) as f64) / rho).sqrt()
}

/// `2^{r-1} c (‖u‖^r_{C⁰} + ‖û‖^r_{C⁰}/(r+1))`, zero when `f ≡ 0`.
pub fn hat_c(problem: &ProblemSpec, u_c0: f64, uhat_c0: f64) -> Result<f64> {
    if matches!(problem.nonlinearity, Nonlinearity::Zero) || problem.growth.c == 0.0 {
        return Ok(0.0);
    }
    let (c, r) = (problem.growth.c, problem.growth.r);
    if c < 0.0 || r < 1.0 {
        return Err(PinnError::Hypothesis(format!("Ĉ needs c ≥ 0 and r ≥ 1, got c={c}, r={r}")));
    }
    Ok(2f64.powf(r - 1.0) * c * (u_c0.powf(r) + uhat_c0.powf(r) / (r + 1.0)))
}

/// `T·exp(T·max{1, 2C_pw²}·(1 + Ĉ + 2√T/C_pw²))`.
pub fn gronwall_factor(horizon: f64, c_pw: f64, hat_c: f64) -> f64 {
    let t = horizon;
    t * (t * (2.0 * c_pw * c_pw).max(1.0) * (1.0 + hat_c + 2.0 * t.sqrt() / (c_pw * c_pw))).exp()
}

/// Midpoint-rule constants `C_Ω`, `C_{Ω_T}`, `C_{∂Ω×[0,T]}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConstants {
    pub c_omega: f64,
    pub c_omega_t: f64,
    pub c_boundary: f64,
}

impl Default for GeometryConstants {
    fn default() -> Self {
        Self {
            c_omega: 1.0,
            c_omega_t: 1.0,
            c_boundary: 1.0,
        }
    }
}

impl GeometryConstants {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.c_omega, self.c_omega_t, self.c_boundary].iter().all(|c| *c > 0.0 && c.is_finite());
        if !ok {
            return Err(PinnError::Config(format!("geometry constants must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormSource {
    /// Closed-form network norm bounds; rigorous but astronomically large.
    LemmaBased,
    /// Finite differences of the residual fields on a dense grid; not rigorous.
    EmpiricalSampled,
}

impl NormSource {
    pub fn name(self) -> &'static str {
        match self {
            NormSource::LemmaBased => "lemma",
            NormSource::EmpiricalSampled => "empirical",
        }
    }
}

/// Every constant entering the bounds. `C1..C5` are kept in log10 form
/// because the lemma-based values overflow `f64` for realistic widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantLedger {
    pub norm_source: NormSource,
    pub c_pw: f64,
    pub trace_constant: f64,
    pub hat_c: f64,
    pub geometry: GeometryConstants,
    /// `log10 C1 .. log10 C5`.
    pub log10_c: [f64; 5],
    /// log10 of the factor multiplying the boundary term: the lemma bound on
    /// `‖û‖_{C¹}` or the sampled value.
    #[serde(with = "crate::serde_ext")]
    pub log10_boundary_factor: f64,
    pub network: Option<NetworkClass>,
    /// `‖σ‖_{C^n}` for n = 0..4 (lemma mode).
    pub sigma_norms: Vec<f64>,
    /// `‖u‖_{C^n}` for n = 0..3.
    pub u_norms: Vec<f64>,
    /// Sampled residual norms (empirical mode).
    pub sampled: Option<EmpiricalNorms>,
}

impl ConstantLedger {
    /// `C_i` for `i` in 1..=5; `+∞` when it exceeds `f64`.
    pub fn c(&self, i: usize) -> f64 {
        10f64.powf(self.log10_c[i - 1])
    }

    pub fn boundary_factor(&self) -> f64 {
        10f64.powf(self.log10_boundary_factor)
    }

    fn check(&self) -> Result<()> {
        let finite = [self.c_pw, self.trace_constant, self.hat_c].iter().all(|v| v.is_finite() && *v >= 0.0);
        let logs_ok = self.log10_c.iter().chain([&self.log10_boundary_factor]).all(|v| !v.is_nan() && *v < f64::INFINITY);
        if !(finite && logs_ok && self.c_pw > 0.0) {
            return Err(PinnError::Contract(format!("constant ledger has invalid entries: {self:?}")));
        }
        Ok(())
    }
}

/// `‖u‖_{C^n}` for n = 0..=3 from the exact solution or user input.
fn solution_norms(problem: &ProblemSpec, supplied: Option<&[f64]>) -> Result<Vec<f64>> {
    if let Some(v) = supplied {
        if v.len() < 4 || v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(PinnError::Config("supply ‖u‖_{C^n} for n = 0..3 as non-negative numbers".into()));
        }
        return Ok(v[..4].to_vec());
    }
    let ex = problem.exact.as_ref().ok_or_else(|| {
        PinnError::MissingInput(format!(
            "problem `{}` has no exact solution; supply ‖u‖_{{C^n}} estimates for n = 0..3",
            problem.name
        ))
    })?;
    (0..=3).map(|n| ex.cn_norm(&problem.domain, n)).collect()
}

fn log10_sum(logs: &[f64]) -> f64 {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + logs.iter().map(|l| 10f64.powf(l - m)).sum::<f64>().log10()
}

/// Lemma-based `C1..C5` and boundary factor as log10 values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaConstants {
    pub log10_c: [f64; 5],
    pub log10_boundary_factor: f64,
    pub sigma_norms: Vec<f64>,
    pub u_norms: Vec<f64>,
}

/// The closed forms bounding `C1..C5` through the network norm lemma
/// `‖u_θ‖_{C^n} ≤ B_n = 16^L (d+1)^{2n} (e² n⁴ W³ R^n ‖σ‖_{C^n})^{nL}`:
///
/// * `C1 = 8 C_Ω (B_3² + ‖u‖²_{C³})`
/// * `C2 = 16 C_{Ω_T} ((d+1) B_4² + 16 ‖a‖²_{C²} B_3² + c² 2^r R^{r+1} (W^{r+1} ‖σ‖^{r+1}_{C⁰} + 1))`
/// * `C3 = 8 d C_Ω (B_3² + ‖u‖²_{C³})`
/// * `C4 = 2 √C_{∂Ω×[0,T]} B_3`
/// * `C5 = 16 C_Ω / C_pw² (B_2² + ‖u‖²_{C²})`
///
/// and the boundary factor `B_1 + ‖u‖_{C¹}`.
pub fn lemma_constants(
    class: &NetworkClass,
    problem: &ProblemSpec,
    geometry: &GeometryConstants,
    c_pw: f64,
    u_norms: Option<&[f64]>,
) -> Result<LemmaConstants> {
    geometry.validate()?;
    let d = problem.dim();
    let u = solution_norms(problem, u_norms)?;
    let tables: Vec<ActivationNormTable> = (0..=4).map(ActivationNormTable::tanh).collect::<Result<_>>()?;
    let log_b = |n: usize| class.log10_cn_bound(d, n, &tables[n]);
    let (b1, b2, b3, b4) = (log_b(1)?, log_b(2)?, log_b(3)?, log_b(4)?);
    let lg = |x: f64| x.log10();

    let c1 = lg(8.0 * geometry.c_omega) + log10_sum(&[2.0 * b3, 2.0 * lg(u[3])]);
    let (_, a_c2) = problem.damping_norms();
    let mut c2_terms = vec![lg((d + 1) as f64) + 2.0 * b4, lg(16.0) + 2.0 * lg(a_c2) + 2.0 * b3];
    let (c, r) = (problem.growth.c, problem.growth.r);
    if !matches!(problem.nonlinearity, Nonlinearity::Zero) && c > 0.0 {
        let (w, rr) = (class.width as f64, class.weight_bound);
        let s0 = tables[0].sup_norms[0];
        c2_terms.push(
            2.0 * lg(c) + r * lg(2.0) + (r + 1.0) * lg(rr) + lg(w.powf(r + 1.0) * s0.powf(r + 1.0) + 1.0),
        );
    }
    let c2 = lg(16.0 * geometry.c_omega_t) + log10_sum(&c2_terms);
    let c3 = lg(8.0 * d as f64 * geometry.c_omega) + log10_sum(&[2.0 * b3, 2.0 * lg(u[3])]);
    let c4 = lg(2.0 * geometry.c_boundary.sqrt()) + b3;
    let c5 = lg(16.0 * geometry.c_omega / (c_pw * c_pw)) + log10_sum(&[2.0 * b2, 2.0 * lg(u[2])]);
    Ok(LemmaConstants {
        log10_c: [c1, c2, c3, c4, c5],
        log10_boundary_factor: log10_sum(&[b1, lg(u[1])]),
        sigma_norms: tables[4].sup_norms.clone(),
        u_norms: u,
    })
}

/// Lemma-mode ledger for a trained network, with `R` the largest observed
/// parameter magnitude rounded up to an integer (at least 1).
pub fn lemma_ledger(params: &MlpParams, problem: &ProblemSpec, geometry: &GeometryConstants, u_norms: Option<&[f64]>) -> Result<ConstantLedger> {
    let arch = params.architecture();
    let class = NetworkClass {
        depth: arch.depth(),
        width: arch.max_width(),
        weight_bound: params.observed_weight_bound(),
    };
    lemma_ledger_for_class(&class, problem, geometry, u_norms)
}

pub fn lemma_ledger_for_class(
    class: &NetworkClass,
    problem: &ProblemSpec,
    geometry: &GeometryConstants,
    u_norms: Option<&[f64]>,
) -> Result<ConstantLedger> {
    let domain = &problem.domain;
    let c_pw = poincare_constant(domain);
    let lc = lemma_constants(class, problem, geometry, c_pw, u_norms)?;
    let act0 = ActivationNormTable::tanh(0)?;
    let uhat_c0 = class.c0_bound(&act0)? + lc.u_norms[0];
    Ok(ConstantLedger {
        norm_source: NormSource::LemmaBased,
        c_pw,
        trace_constant: trace_constant(domain),
        hat_c: hat_c(problem, lc.u_norms[0], uhat_c0)?,
        geometry: *geometry,
        log10_c: lc.log10_c,
        log10_boundary_factor: lc.log10_boundary_factor,
        network: Some(*class),
        sigma_norms: lc.sigma_norms,
        u_norms: lc.u_norms,
        sampled: None,
    })
}

/// Empirical-mode ledger: `C_i` from sampled `‖R_i²‖_{C²}` and the boundary
/// factor from the sampled `‖u_θ − u‖_{C¹}`.
pub fn empirical_ledger(params: &MlpParams, problem: &ProblemSpec, geometry: &GeometryConstants, nodes_per_axis: usize) -> Result<ConstantLedger> {
    geometry.validate()?;
    let domain = &problem.domain;
    let c_pw = poincare_constant(domain);
    let s = empirical_cn_norms(params, problem, 2, nodes_per_axis)?;
    let uhat_c1 = s.uhat_c1.ok_or_else(|| {
        PinnError::MissingInput(format!("problem `{}` has no exact solution to sample ‖u_θ − u‖_{{C¹}}", problem.name))
    })?;
    let u = solution_norms(problem, None)?;
    let g = geometry;
    let lg = |x: f64| x.log10();
    let log10_c = [
        lg(g.c_omega * s.u1),
        lg(g.c_omega_t * s.pde),
        lg(g.c_omega * s.grad),
        0.5 * lg(g.c_boundary * s.sut),
        lg(2.0 * g.c_omega / (c_pw * c_pw) * s.u0),
    ];
    Ok(ConstantLedger {
        norm_source: NormSource::EmpiricalSampled,
        c_pw,
        trace_constant: trace_constant(domain),
        hat_c: hat_c(problem, u[0], s.uhat_c0.unwrap_or(0.0))?,
        geometry: *geometry,
        log10_c,
        log10_boundary_factor: lg(uhat_c1),
        network: None,
        sigma_norms: vec![],
        u_norms: u,
        sampled: Some(s),
    })
}

/// One additive term of `C(M)` (before the `max{1, 2C_pw²}` prefactor).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTerm {
    pub name: String,
    #[serde(with = "crate::serde_ext")]
    pub log10: f64,
    #[serde(with = "crate::serde_ext")]
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub norm_source: NormSource,
    pub include_nonlinearity: bool,
    pub prefactor: f64,
    pub terms: Vec<BoundTerm>,
    #[serde(with = "crate::serde_ext")]
    pub c_of_m: f64,
    #[serde(with = "crate::serde_ext")]
    pub log10_c_of_m: f64,
    #[serde(with = "crate::serde_ext")]
    pub gronwall_factor: f64,
    /// Bound on `∫|û|² + ∫|û_t|²`; `+∞` if it exceeds `f64` (see `log10_bound`).
    #[serde(with = "crate::serde_ext")]
    pub bound_value: f64,
    #[serde(with = "crate::serde_ext")]
    pub log10_bound: f64,
}

fn term(name: &str, log10: f64) -> BoundTerm {
    BoundTerm {
        name: name.into(),
        log10,
        value: 10f64.powf(log10),
    }
}

/// `C(M)·T·exp(…)` from the training-error components and collocation sizes.
/// With `include_nonlinearity == false` the `Ĉ` term is dropped from the exponent.
pub fn posterior_bound(report: &TrainingErrorReport, sets: &CollocationSets, ledger: &ConstantLedger, include_nonlinearity: bool) -> Result<BoundReport> {
    ledger.check()?;
    if report.sizes != sets.sizes() {
        return Err(PinnError::Contract(format!(
            "report sizes {:?} do not match collocation sets {:?}",
            report.sizes,
            sets.sizes()
        )));
    }
    Ok(assemble(report, &sets.domain, ledger, include_nonlinearity))
}

fn assemble(report: &TrainingErrorReport, domain: &BoxDomain, ledger: &ConstantLedger, include_nonlinearity: bool) -> BoundReport {
    let d = domain.dim() as f64;
    let t = domain.horizon;
    let c_pw = ledger.c_pw;
    let sz = report.sizes;
    let lg = |x: f64| x.log10();
    let (mt, mpde, ms) = (lg(sz.m_t as f64), lg(sz.m_pde as f64), lg(sz.m_s as f64));
    let [c1, c2, c3, c4, c5] = ledger.log10_c;

    let boundary = lg(2.0 * (t * domain.boundary_measure()).sqrt())
        + ledger.log10_boundary_factor
        + log10_sum(&[c4 - ms / d, 0.5 * lg(report.sut)]);
    let terms = vec![
        term("u1-quadrature", c1 - 2.0 / d * mt),
        term("u1-training", lg(report.u1)),
        term("pde-quadrature", c2 - 2.0 / (d + 1.0) * mpde),
        term("pde-training", lg(report.pde)),
        term("grad-quadrature", c3 - 2.0 / d * mt),
        term("grad-training", lg(report.grad)),
        term("sut-boundary", boundary),
        term("u0-quadrature", c5 - 2.0 / d * mt),
        term("u0-training", lg(2.0 / (c_pw * c_pw) * report.u0)),
    ];
    let prefactor = (2.0 * c_pw * c_pw).max(1.0);
    let logs: Vec<f64> = terms.iter().map(|t| t.log10).collect();
    let log10_c_of_m = lg(prefactor) + log10_sum(&logs);
    let hc = if include_nonlinearity { ledger.hat_c } else { 0.0 };
    let gronwall = gronwall_factor(t, c_pw, hc);
    let log10_bound = log10_c_of_m + lg(gronwall);
    BoundReport {
        norm_source: ledger.norm_source,
        include_nonlinearity,
        prefactor,
        terms,
        c_of_m: 10f64.powf(log10_c_of_m),
        log10_c_of_m,
        gronwall_factor: gronwall,
        bound_value: 10f64.powf(log10_bound),
        log10_bound,
    }
}

/// L² norms of the residuals (not squared).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms {
    pub u1: f64,
    pub pde: f64,
    pub grad: f64,
    pub sut: f64,
    pub u0: f64,
}

impl ResidualNorms {
    /// Square roots of a (generalization-estimate) report's components.
    pub fn from_report(r: &TrainingErrorReport) -> Self {
        Self {
            u1: r.u1.sqrt(),
            pde: r.pde.sqrt(),
            grad: r.grad.sqrt(),
            sut: r.sut.sqrt(),
            u0: r.u0.sqrt(),
        }
    }
}

/// `𝒞·T·exp(T·max{1,2C_pw²}(1 + Ĉ + 2√T/C_pw²))` with
/// `𝒞 = max{1,2C_pw²}(‖R_u1‖² + ‖R_PDE‖² + ‖R_∇u‖² + 2√(T|∂Ω|)‖û‖_{C¹}‖R_{s,u_t}‖ + 2/C_pw² ‖R_u0‖²)`.
pub fn residual_bound(norms: &ResidualNorms, domain: &BoxDomain, c_pw: f64, hat_c: f64, uhat_c1: f64) -> f64 {
    let t = domain.horizon;
    let inner = norms.u1 * norms.u1
        + norms.pde * norms.pde
        + norms.grad * norms.grad
        + 2.0 * (t * domain.boundary_measure()).sqrt() * uhat_c1 * norms.sut
        + 2.0 / (c_pw * c_pw) * norms.u0 * norms.u0;
    (2.0 * c_pw * c_pw).max(1.0) * inner * gronwall_factor(t, c_pw, hat_c)
}

/// Per-order sup norms `[sup|f|, max_i sup|∂_i f|, max_{i,j} sup|∂_i∂_j f|]`
/// (truncated to `order + 1` entries) by central differences on a node grid.
/// `values` is row-major with the last axis fastest.
pub fn fd_cn_norms(values: &[f64], counts: &[usize], spacing: &[f64], order: usize) -> Result<Vec<f64>> {
    if order > 2 {
        return Err(PinnError::Unsupported(format!("finite-difference norms above order 2 (asked {order})")));
    }
    let total: usize = counts.iter().product();
    if values.len() != total || counts.len() != spacing.len() {
        return Err(PinnError::Contract("grid values, counts and spacings disagree".into()));
    }
    let dim = counts.len();
    let mut stride = vec![1usize; dim];
    for i in (0..dim.saturating_sub(1)).rev() {
        stride[i] = stride[i + 1] * counts[i + 1];
    }
    let mut sup = vec![0.0f64; order + 1];
    let mut idx = vec![0usize; dim];
    for k in 0..total {
        let mut r = k;
        for i in 0..dim {
            idx[i] = r / stride[i];
            r %= stride[i];
        }
        let f = values[k];
        sup[0] = sup[0].max(f.abs());
        let inner = |i: usize| idx[i] > 0 && idx[i] + 1 < counts[i];
        for i in 0..dim {
            if !inner(i) {
                continue;
            }
            let (p, m) = (values[k + stride[i]], values[k - stride[i]]);
            if order >= 1 {
                sup[1] = sup[1].max(((p - m) / (2.0 * spacing[i])).abs());
            }
            if order >= 2 {
                sup[2] = sup[2].max(((p - 2.0 * f + m) / (spacing[i] * spacing[i])).abs());
                for j in i + 1..dim {
                    if !inner(j) {
                        continue;
                    }
                    let (si, sj) = (stride[i], stride[j]);
                    let mixed = (values[k + si + sj] - values[k + si - sj] - values[k - si + sj] + values[k - si - sj])
                        / (4.0 * spacing[i] * spacing[j]);
                    sup[2] = sup[2].max(mixed.abs());
                }
            }
        }
    }
    Ok(sup)
}

/// Sampled `C^n` norms (max over orders ≤ n) of the squared residual fields,
/// plus `‖u‖_{C⁰}`, `‖û‖_{C⁰}`, `‖û‖_{C¹}` when an exact solution exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalNorms {
    pub order: usize,
    pub nodes_per_axis: usize,
    pub pde: f64,
    pub sut: f64,
    pub u0: f64,
    pub u1: f64,
    pub grad: f64,
    pub uhat_c0: Option<f64>,
    pub uhat_c1: Option<f64>,
}

fn node_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Flattened tensor grid, last axis fastest.
fn tensor_points(axes: &[Vec<f64>]) -> Vec<f64> {
    let total: usize = axes.iter().map(|a| a.len()).product();
    let mut out = Vec::with_capacity(total * axes.len());
    for mut k in 0..total {
        let start = out.len();
        out.resize(start + axes.len(), 0.0);
        for (j, axis) in axes.iter().enumerate().rev() {
            out[start + j] = axis[k % axis.len()];
            k /= axis.len();
        }
    }
    out
}

fn spacing(axes: &[Vec<f64>]) -> Vec<f64> {
    axes.iter().map(|a| a[1] - a[0]).collect()
}

fn cn(values: &[f64], axes: &[Vec<f64>], order: usize) -> Result<f64> {
    let counts: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    Ok(fd_cn_norms(values, &counts, &spacing(axes), order)?.into_iter().fold(0.0, f64::max))
}

pub fn empirical_cn_norms(field: &dyn JetField, problem: &ProblemSpec, order: usize, nodes_per_axis: usize) -> Result<EmpiricalNorms> {
    if nodes_per_axis < 3 {
        return Err(PinnError::Config("empirical norms need at least 3 nodes per axis".into()));
    }
    let dom = &problem.domain;
    let d = dom.dim();
    let n = nodes_per_axis;
    let space: Vec<Vec<f64>> = (0..d).map(|i| node_axis(dom.lower[i], dom.upper[i], n)).collect();
    let time = node_axis(0.0, dom.horizon, n);

    let mut st_axes = space.clone();
    st_axes.push(time.clone());
    let st_points = tensor_points(&st_axes);
    let pde: Vec<f64> = residuals_on(field, problem, &st_points, Stratum::Interior)?
        .into_iter()
        .map(|r| match r {
            ResidualVector::Interior { pde } => pde * pde,
            _ => unreachable!("interior stratum"),
        })
        .collect();
    let pde = cn(&pde, &st_axes, order)?;

    let mut sut = 0.0f64;
    for axis in 0..d {
        let mut face_axes: Vec<Vec<f64>> = (0..d).filter(|&j| j != axis).map(|j| space[j].clone()).collect();
        face_axes.push(time.clone());
        for side in [dom.lower[axis], dom.upper[axis]] {
            let mut pts = Vec::new();
            for q in tensor_points(&face_axes).chunks(d) {
                pts.extend_from_slice(&q[..axis]);
                pts.push(side);
                pts.extend_from_slice(&q[axis..]);
            }
            let vals: Vec<f64> = residuals_on(field, problem, &pts, Stratum::Boundary)?
                .into_iter()
                .map(|r| match r {
                    ResidualVector::Boundary { sut, .. } => sut * sut,
                    _ => unreachable!("boundary stratum"),
                })
                .collect();
            sut = sut.max(cn(&vals, &face_axes, order)?);
        }
    }

    let mut init_points = Vec::new();
    for q in tensor_points(&space).chunks(d) {
        init_points.extend_from_slice(q);
        init_points.push(0.0);
    }
    let (mut u0, mut u1, mut grad) = (Vec::new(), Vec::new(), Vec::new());
    for r in residuals_on(field, problem, &init_points, Stratum::Initial)? {
        if let ResidualVector::Initial { u0: a, u1: b, grad: g } = r {
            u0.push(a * a);
            u1.push(b * b);
            grad.push(g.iter().map(|v| v * v).sum::<f64>());
        }
    }

    let (uhat_c0, uhat_c1) = match &problem.exact {
        Some(ex) => {
            let dim = d + 1;
            let plan = JetPlan::new(dim, (0..dim).collect(), &[])?;
            let jets = field.jets(&st_points, &plan)?;
            let (mut c0, mut c1) = (0.0f64, 0.0f64);
            for (i, z) in st_points.chunks(dim).enumerate() {
                let e = (jets.value(i) - ex.value(z)).abs();
                c0 = c0.max(e);
                c1 = c1.max(e);
                for axis in 0..dim {
                    let de = jets.first(i, axis).unwrap_or(0.0) - ex.first(z, axis);
                    c1 = c1.max(de.abs());
                }
            }
            (Some(c0), Some(c1))
        }
        None => (None, None),
    };

    let values = [&u0, &u1, &grad];
    let [u0, u1, grad] = values.map(|v| cn(v, &space, order));
    Ok(EmpiricalNorms {
        order,
        nodes_per_axis,
        pde,
        sut,
        u0: u0?,
        u1: u1?,
        grad: grad?,
        uhat_c0,
        uhat_c1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;
    use crate::net::{Architecture, InitScheme};
    use crate::problem::damped_wave_problem;
    use crate::quadrature::{build_sets, GridCounts};
    use crate::residual::training_error;

    #[test]
    fn poincare_constant_for_unit_square_box() {
        let b = BoxDomain::cube(2, -0.5, 0.5, 0.5).unwrap();
        assert!((poincare_constant(&b) - 2f64.sqrt() / PI).abs() < 1e-12);
        let unit = BoxDomain::cube(1, 0.0, 1.0, 1.0).unwrap();
        assert!((poincare_constant(&unit) - 0.318_309_886_183_791).abs() < 1e-12);
        assert!((poincare_constant(&b.scaled(3.0)) - 3.0 * poincare_constant(&b)).abs() < 1e-12);
    }

    #[test]
    fn trace_constant_examples() {
        let b = BoxDomain::cube(2, -0.5, 0.5, 0.5).unwrap();
        assert!((trace_constant(&b) - 24f64.sqrt()).abs() < 1e-12);
        // [0,1]² × [0,1]: h = √3, ρ = 1/2, 2h > d+1.
        let c = BoxDomain::cube(2, 0.0, 1.0, 1.0).unwrap();
        let expected = (2.0 * 2.0 * 3f64.sqrt() / 0.5).sqrt();
        assert!((trace_constant(&c) - expected).abs() < 1e-12);
        assert!((trace_constant(&c) - 3.722).abs() < 1e-3);
        // Once T exceeds the shortest spatial edge ρ is fixed and the constant grows with T.
        let mut prev = 0.0;
        for t in [1.0, 1.5, 2.0, 4.0] {
            let c = trace_constant(&BoxDomain::cube(2, -0.5, 0.5, t).unwrap());
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn hat_c_examples() {
        let p = damped_wave_problem();
        assert_eq!(hat_c(&p, 1.0, 1.0).unwrap(), 0.0);
        let dom = BoxDomain::cube(1, 0.0, 1.0, 1.0).unwrap();
        let mut q = crate::problem::semilinear_power_problem(1.0, dom, "0", "sin(pi*x)", "0").unwrap();
        q.growth.c = 1.0;
        assert!((hat_c(&q, 1.0, 0.5).unwrap() - 1.25).abs() < 1e-15);
        q.growth.c = 2.0;
        assert!((hat_c(&q, 1.0, 0.5).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn gronwall_factor_for_damped_wave_geometry() {
        let b = BoxDomain::cube(2, -0.5, 0.5, 0.5).unwrap();
        let c_pw = poincare_constant(&b);
        // Independent evaluation: 2C_pw² = 4/π² < 1, so the max is 1.
        let expected = 0.5 * (0.5 * (1.0 + 2.0 * 0.5f64.sqrt() * PI * PI / 2.0)).exp();
        let g = gronwall_factor(0.5, c_pw, 0.0);
        assert!((g - expected).abs() < 1e-12 * expected);
        // 30-digit evaluation: 27.01210014844248704...
        assert!((g - 27.012_100_148_442_487).abs() < 1e-10, "{g}");
    }

    #[test]
    fn fd_norms_of_constant_and_sine() {
        let axes = vec![node_axis(-0.5, 0.5, 201)];
        let c = vec![-3.0; 201];
        assert_eq!(fd_cn_norms(&c, &[201], &spacing(&axes), 2).unwrap(), vec![3.0, 0.0, 0.0]);
        let s: Vec<f64> = axes[0].iter().map(|x| (PI * x).sin()).collect();
        let n = fd_cn_norms(&s, &[201], &spacing(&axes), 2).unwrap();
        assert!((n[1] - PI).abs() < 1e-3 * PI);
        assert!((n[2] - PI * PI).abs() < 1e-3 * PI * PI);
        let coarse_axes = vec![node_axis(-0.5, 0.5, 101)];
        let s2: Vec<f64> = coarse_axes[0].iter().map(|x| (PI * x).sin()).collect();
        let n2 = fd_cn_norms(&s2, &[101], &spacing(&coarse_axes), 2).unwrap();
        assert!(((n2[2] - n[2]) / n[2]).abs() < 0.02);
    }

    #[test]
    fn fd_mixed_derivative() {
        // f = x y on [0,1]²: ∂x∂y f = 1, pure second derivatives 0.
        let axes = vec![node_axis(0.0, 1.0, 11), node_axis(0.0, 1.0, 11)];
        let pts = tensor_points(&axes);
        let v: Vec<f64> = pts.chunks(2).map(|p| p[0] * p[1]).collect();
        let n = fd_cn_norms(&v, &[11, 11], &spacing(&axes), 2).unwrap();
        assert!((n[2] - 1.0).abs() < 1e-12);
        assert!((n[1] - 1.0).abs() < 1e-12);
    }

    fn small_net(seed: u64) -> MlpParams {
        let arch = Architecture::new(vec![3, 8, 8, 1], None).unwrap();
        MlpParams::init(&arch, seed, InitScheme::UniformFanIn).unwrap()
    }

    #[test]
    fn exact_solution_has_zero_sampled_residual_norms() {
        let p = damped_wave_problem();
        let ex = p.exact.as_ref().unwrap();
        let s = empirical_cn_norms(ex, &p, 2, 9).unwrap();
        assert!(s.pde < 1e-20 && s.sut < 1e-20 && s.u0 < 1e-20 && s.u1 < 1e-20 && s.grad < 1e-20);
        assert_eq!(s.uhat_c1, Some(0.0));
    }

    #[test]
    fn bound_vanishes_with_zero_errors_and_many_points() {
        let p = damped_wave_problem();
        let net = small_net(1);
        let ledger = empirical_ledger(&net, &p, &GeometryConstants::default(), 9).unwrap();
        let sets = build_sets(&p.domain, &GridCounts::uniform(2, (4, 3), (5, 3), 6)).unwrap();
        let mut report = training_error(&net, &sets, &p).unwrap();
        for v in [&mut report.pde, &mut report.su, &mut report.sut, &mut report.u0, &mut report.u1, &mut report.grad] {
            *v = 0.0;
        }
        let mut last = f64::INFINITY;
        for scale in [1e3, 1e6, 1e9, 1e12] {
            let mut r = report.clone();
            r.sizes.m_pde = (sets.sizes().m_pde as f64 * scale) as usize;
            r.sizes.m_s = (sets.sizes().m_s as f64 * scale) as usize;
            r.sizes.m_t = (sets.sizes().m_t as f64 * scale) as usize;
            let b = assemble(&r, &sets.domain, &ledger, false).bound_value;
            assert!(b < last);
            last = b;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn bound_report_invariants() {
        let p = damped_wave_problem();
        let net = small_net(2);
        let sets = build_sets(&p.domain, &GridCounts::uniform(2, (4, 3), (5, 3), 6)).unwrap();
        let report = training_error(&net, &sets, &p).unwrap();
        for ledger in [
            empirical_ledger(&net, &p, &GeometryConstants::default(), 9).unwrap(),
            lemma_ledger(&net, &p, &GeometryConstants::default(), None).unwrap(),
        ] {
            let b = posterior_bound(&report, &sets, &ledger, false).unwrap();
            assert!(b.terms.iter().all(|t| t.value >= 0.0));
            assert!(((b.c_of_m * b.gronwall_factor) - b.bound_value).abs() <= 1e-9 * b.bound_value);
            let json = serde_json::to_string(&b).unwrap();
            assert!(json.contains("sut-boundary"));
        }
    }

    #[test]
    fn empirical_bound_below_lemma_bound() {
        let p = damped_wave_problem();
        let sets = build_sets(&p.domain, &GridCounts::uniform(2, (4, 3), (5, 3), 6)).unwrap();
        for seed in 0..3 {
            let net = small_net(seed);
            let report = training_error(&net, &sets, &p).unwrap();
            let emp = posterior_bound(&report, &sets, &empirical_ledger(&net, &p, &GeometryConstants::default(), 9).unwrap(), false).unwrap();
            let lem = posterior_bound(&report, &sets, &lemma_ledger(&net, &p, &GeometryConstants::default(), None).unwrap(), false).unwrap();
            assert!(emp.log10_bound <= lem.log10_bound);
        }
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let p = damped_wave_problem();
        let net = small_net(0);
        let a = build_sets(&p.domain, &GridCounts::uniform(2, (4, 3), (5, 3), 6)).unwrap();
        let b = build_sets(&p.domain, &GridCounts::uniform(2, (5, 3), (5, 3), 6)).unwrap();
        let report = training_error(&net, &a, &p).unwrap();
        let ledger = lemma_ledger(&net, &p, &GeometryConstants::default(), None).unwrap();
        assert!(matches!(posterior_bound(&report, &b, &ledger, false), Err(PinnError::Contract(_))));
    }

    #[test]
    fn residual_bound_examples() {
        let b = BoxDomain::cube(2, -0.5, 0.5, 0.5).unwrap();
        let c_pw = poincare_constant(&b);
        assert_eq!(residual_bound(&ResidualNorms::default(), &b, c_pw, 0.0, 1.0), 0.0);
        let r = ResidualNorms { u1: 1e-3, pde: 1e-3, grad: 1e-3, sut: 1e-3, u0: 1e-3 };
        let uhat = 0.7;
        // Independent recomputation: |∂Ω| = 4, T = 0.5, so 2√(T|∂Ω|) = 2√2.
        let inner = 3e-6 + 2.0 * 2f64.sqrt() * uhat * 1e-3 + 2.0 / (c_pw * c_pw) * 1e-6;
        let g = 0.5 * (0.5 * (1.0 + 2.0 * 0.5f64.sqrt() / (c_pw * c_pw))).exp();
        let expected = inner * g;
        assert!((residual_bound(&r, &b, c_pw, 0.0, uhat) - expected).abs() < 1e-12 * expected);
        let mut bigger = r;
        bigger.pde = 2e-3;
        assert!(residual_bound(&bigger, &b, c_pw, 0.0, uhat) > residual_bound(&r, &b, c_pw, 0.0, uhat));
    }

    #[test]
    fn lemma_c1_matches_independent_evaluation() {
        // L = 2, d = 1, W = 1, R = 1, ‖u‖_{C³} = 0, C_Ω = 1:
        // C1 = 8·16⁴·2¹²·(e²·81·‖σ‖_{C³})^{12}.
        let dom = BoxDomain::cube(1, 0.0, 1.0, 1.0).unwrap();
        let p = crate::problem::semilinear_power_problem(0.0, dom, "0", "sin(pi*x)", "0").unwrap();
        let mut p = p;
        p.nonlinearity = Nonlinearity::Zero;
        let class = NetworkClass { depth: 2, width: 1, weight_bound: 1.0 };
        let lc = lemma_constants(&class, &p, &GeometryConstants::default(), 1.0, Some(&[0.0, 0.0, 0.0, 0.0])).unwrap();
        let s3 = ActivationNormTable::tanh(3).unwrap().cn_norm;
        let expected = (8.0f64).log10() + 4.0 * 16f64.log10() + 12.0 * 2f64.log10() + 12.0 * (E * E * 81.0 * s3).log10();
        assert!((lc.log10_c[0] - expected).abs() < 1e-12);
        // C3 = d·C1 with d = 1.
        assert!((lc.log10_c[2] - lc.log10_c[0]).abs() < 1e-12);
    }

    #[test]
    fn missing_norms_for_problem_without_solution() {
        let dom = BoxDomain::cube(1, 0.0, 1.0, 1.0).unwrap();
        let p = crate::problem::semilinear_power_problem(1.0, dom, "0", "sin(pi*x)", "0").unwrap();
        let class = NetworkClass { depth: 2, width: 4, weight_bound: 1.0 };
        let r = lemma_constants(&class, &p, &GeometryConstants::default(), 0.3, None);
        assert!(matches!(r, Err(PinnError::MissingInput(_))));
    }
}
