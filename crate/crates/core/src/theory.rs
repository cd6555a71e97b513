//! Approximation-theoretic widths, residual bounds, rates and a-priori sizing.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{PinnError, Result};
use crate::quadrature::BoxDomain;

/// Inputs of the two-hidden-layer approximation result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    /// Grid resolution `N` of the construction.
    #[serde(rename = "big_n")]
    pub big_n: usize,
    pub delta: f64,
    pub horizon: f64,
    /// Integer corners of the enclosing box `Π [a_i, b_i]`.
    pub box_lower: Vec<i64>,
    pub box_upper: Vec<i64>,
    pub gamma: Option<f64>,
    pub r: Option<f64>,
    /// `|u − u_θ|_{H^{k+1}(Ω_T)}`.
    pub seminorm_hk1: Option<f64>,
    /// `‖u − u_θ‖_{W^{l,∞}(Ω_T)}` for `l = 0, 1, 2`.
    pub w_inf: Option<[f64; 3]>,
    /// The semilinear-term constant `C̃`, taken as given.
    pub gn_constant: Option<f64>,
}

impl TheoryInputs {
    pub fn new(d: usize, k: usize, n: usize, big_n: usize, delta: f64, horizon: f64, lower: Vec<i64>, upper: Vec<i64>) -> Self {
        Self {
            d,
            k,
            n,
            big_n,
            delta,
            horizon,
            box_lower: lower,
            box_upper: upper,
            gamma: None,
            r: None,
            seminorm_hk1: None,
            w_inf: None,
            gn_constant: None,
        }
    }

    /// `r = 4γ/(d+1−4γ)`.
    pub fn r_from_gamma(d: usize, gamma: f64) -> f64 {
        4.0 * gamma / (d as f64 + 1.0 - 4.0 * gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..6).contains(&self.d) {
            return Err(PinnError::Hypothesis(format!("need 1 ≤ d < 6, got d = {}", self.d)));
        }
        if self.k <= 3 {
            return Err(PinnError::Hypothesis(format!("need k > 3, got k = {}", self.k)));
        }
        if self.n < 2 {
            return Err(PinnError::Hypothesis(format!("need n ≥ 2, got n = {}", self.n)));
        }
        if self.big_n <= 5 {
            return Err(PinnError::Hypothesis(format!("need N > 5, got N = {}", self.big_n)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) || !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(PinnError::Config("δ and T must be positive and finite".into()));
        }
        if self.box_lower.len() != self.d || self.box_upper.len() != self.d {
            return Err(PinnError::Config(format!("enclosing box needs {} integer corners per side", self.d)));
        }
        if self.box_lower.iter().zip(&self.box_upper).any(|(a, b)| a >= b) {
            return Err(PinnError::Config("enclosing box needs a_i < b_i".into()));
        }
        if let Some(g) = self.gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(PinnError::Hypothesis(format!("need γ ∈ [0, 1), got {g}")));
            }
            let r = Self::r_from_gamma(self.d, g);
            if let Some(given) = self.r {
                if (given - r).abs() > 1e-12 * r.abs().max(1.0) {
                    return Err(PinnError::Hypothesis(format!("r = {given} does not equal 4γ/(d+1−4γ) = {r}")));
                }
            }
        }
        Ok(())
    }

    fn box_sum(&self) -> f64 {
        self.box_lower.iter().zip(&self.box_upper).map(|(a, b)| (b - a) as f64).sum()
    }

    fn box_volume(&self) -> f64 {
        self.box_lower.iter().zip(&self.box_upper).map(|(a, b)| (b - a) as f64).product()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Widths of the two hidden layers:
/// `3⌈(k+n−1)/2⌉·C(d+k+1, k) + ⌈(N−1)(T + Σ(b_i−a_i))⌉` and
/// `3(d+3)·N^{d+1}·⌈(d+n+1)/2⌉·⌈T·Π(b_i−a_i)⌉`.
pub fn q1_widths(inp: &TheoryInputs) -> Result<(u64, u64)> {
    inp.validate()?;
    let (d, k, n, nn) = (inp.d, inp.k, inp.n, inp.big_n);
    let first = 3 * (k + n - 1).div_ceil(2) as u64 * binomial(d + k + 1, k).round() as u64
        + ((nn - 1) as f64 * (inp.horizon + inp.box_sum())).ceil() as u64;
    let second = 3 * (d as u64 + 3) * (nn as u64).pow(d as u32 + 1) * (d + n + 1).div_ceil(2) as u64
        * (inp.horizon * inp.box_volume()).ceil() as u64;
    Ok((first, second))
}

/// `λ_l(N)`, `β_{l,δ}` and `C_l` for `l ∈ {0, 1, 2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaBeta {
    pub l: usize,
    pub lambda: f64,
    pub beta: f64,
    pub c_l: f64,
}

/// `C_l = max_{0≤i≤l} C(d+i, i)^{1/2} ((k+1−i)!)^{1/2} / (⌈(k+1−i)/(d+1)⌉!)^{(d+1)/2} · (3√(d+1)/π)^{k+1−i} · |u−u_θ|_{H^{k+1}}`.
pub fn c_l(inp: &TheoryInputs, l: usize) -> Result<f64> {
    let semi = inp
        .seminorm_hk1
        .ok_or_else(|| PinnError::MissingInput("|u − u_θ|_{H^{k+1}} seminorm is required".into()))?;
    let (d, k) = (inp.d, inp.k);
    let mut best = f64::NEG_INFINITY;
    for i in 0..=l {
        let m = k + 1 - i;
        let v = binomial(d + i, i).sqrt() * factorial(m).sqrt() / factorial(m.div_ceil(d + 1)).powf((d + 1) as f64 / 2.0)
            * (3.0 * ((d + 1) as f64).sqrt() / PI).powi(m as i32)
            * semi;
        best = best.max(v);
    }
    Ok(best)
}

/// `λ_l(N) = 2^l 3^{d+1} (1+δ) ln^l(β_{l,δ} N^{d+k+4})` with
/// `β_{l,δ} = 2^{l(d+1)}·5·max{TΠ(b_i−a_i), d+1}·max{‖u−u_θ‖_{W^{l,∞}}, 1} / (3^{d+1} δ min{1, C_l})`.
pub fn lambda_beta(inp: &TheoryInputs, l: usize) -> Result<LambdaBeta> {
    inp.validate()?;
    if l > 2 {
        return Err(PinnError::Config(format!("l must be 0, 1 or 2, got {l}")));
    }
    let w = inp
        .w_inf
        .ok_or_else(|| PinnError::MissingInput("‖u − u_θ‖_{W^{l,∞}} for l = 0..2 is required".into()))?;
    let cl = c_l(inp, l)?;
    let d = inp.d as f64;
    let beta = 2f64.powf(l as f64 * (d + 1.0)) * 5.0 * (inp.horizon * inp.box_volume()).max(d + 1.0) * w[l].max(1.0)
        / (3f64.powf(d + 1.0) * inp.delta * cl.min(1.0));
    let log_arg = beta.ln() + (d + inp.k as f64 + 4.0) * (inp.big_n as f64).ln();
    let lambda = 2f64.powi(l as i32) * 3f64.powf(d + 1.0) * (1.0 + inp.delta) * log_arg.powi(l as i32);
    Ok(LambdaBeta { l, lambda, beta, c_l: cl })
}

/// Upper bounds on the six residual norms of the constructed network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualBounds {
    pub pde: f64,
    pub su: f64,
    pub sut: f64,
    pub u0: f64,
    pub u1: f64,
    pub grad: f64,
    pub trace_constant: f64,
}

/// `domain` is `Ω` (for `C_{Ω_T}`); `a_inf = ‖a‖_{L∞}`. With `semilinear` the
/// `C̃ (C_2λ_2N^{−k+1})^γ (C_0λ_0N^{−k−1})^{1−γ}` term is added, which needs
/// `gn_constant` and `γ`.
pub fn q1_residual_bounds(inp: &TheoryInputs, domain: &BoxDomain, a_inf: f64, semilinear: bool) -> Result<ResidualBounds> {
    inp.validate()?;
    if domain.dim() != inp.d {
        return Err(PinnError::Config("domain dimension differs from d".into()));
    }
    let [l0, l1, l2] = [0, 1, 2].map(|l| lambda_beta(inp, l));
    let (l0, l1, l2) = (l0?, l1?, l2?);
    let nn = inp.big_n as f64;
    let k = inp.k as f64;
    let sd = (inp.d as f64).sqrt();
    let c_t = crate::bounds::trace_constant(domain);
    let t2 = l2.c_l * l2.lambda * nn.powf(-k + 1.0);
    let t1 = l1.c_l * l1.lambda * nn.powf(-k);
    let mut pde = (l2.c_l + sd) * l2.lambda * nn.powf(-k + 1.0) + a_inf * t1;
    if semilinear {
        let c_tilde = inp
            .gn_constant
            .ok_or_else(|| PinnError::MissingInput("the semilinear term needs the user-supplied constant C̃".into()))?;
        let gamma = inp
            .gamma
            .ok_or_else(|| PinnError::MissingInput("the semilinear term needs γ".into()))?;
        let t0 = l0.c_l * l0.lambda * nn.powf(-k - 1.0);
        pde += c_tilde * t2.powf(gamma) * t0.powf(1.0 - gamma);
    }
    Ok(ResidualBounds {
        pde,
        su: c_t * t1,
        sut: c_t * t2,
        u0: c_t * t1,
        u1: c_t * t2,
        grad: sd * c_t * t2,
        trace_constant: c_t,
    })
}

/// One row of the rate table. `M_t = M_s = N^d`, `M_PDE = N^{d+1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub big_n: usize,
    /// `ln²(N) N^{−k+1}`.
    pub generalization: f64,
    /// `ln⁴(N) N^{2(−k+1)}`.
    pub training_network: f64,
    pub m_s_term: f64,
    pub m_t_term: f64,
    pub m_pde_term: f64,
    /// `ln⁴(N)N^{2(−k+1)} + M_s^{−2/d} + M_t^{−2/d} + M_PDE^{−2/(d+1)}`.
    pub training_total: f64,
}

pub fn rate_curves(d: usize, k: f64, ns: &[usize]) -> Result<Vec<RateRow>> {
    if let Some(&n) = ns.iter().find(|&&n| n <= 5) {
        return Err(PinnError::Hypothesis(format!("rates need N > 5, got N = {n}")));
    }
    let df = d as f64;
    Ok(ns
        .iter()
        .map(|&n| {
            let nf = n as f64;
            let ln = nf.ln();
            let (m_t, m_s, m_pde) = (nf.powf(df), nf.powf(df), nf.powf(df + 1.0));
            let training_network = ln.powi(4) * nf.powf(2.0 * (1.0 - k));
            let m_s_term = m_s.powf(-2.0 / df);
            let m_t_term = m_t.powf(-2.0 / df);
            let m_pde_term = m_pde.powf(-2.0 / (df + 1.0));
            RateRow {
                big_n: n,
                generalization: ln * ln * nf.powf(1.0 - k),
                training_network,
                m_s_term,
                m_t_term,
                m_pde_term,
                training_total: training_network + m_s_term + m_t_term + m_pde_term,
            }
        })
        .collect())
}

pub fn write_rate_csv<W: Write>(rows: &[RateRow], mut w: W) -> Result<()> {
    writeln!(w, "N,generalization,training_network,m_s_term,m_t_term,m_pde_term,training_total")?;
    for r in rows {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.big_n, r.generalization, r.training_network, r.m_s_term, r.m_t_term, r.m_pde_term, r.training_total
        )?;
    }
    writeln!(w, "# M_t = M_s = N^d, M_PDE = N^(d+1); all M terms enter with a plus sign")?;
    Ok(())
}

/// Sizes from the a-priori result. Thresholds are also given as log10 since
/// they overflow `f64` for small `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizingPlan {
    pub epsilon: f64,
    pub d: usize,
    pub k: usize,
    pub eta: f64,
    #[serde(rename = "big_n")]
    pub big_n: f64,
    pub log10_m_pde: f64,
    pub log10_m_t: f64,
    pub log10_m_s: f64,
    pub m_pde: f64,
    pub m_t: f64,
    pub m_s: f64,
    pub r_min: f64,
    /// `W_min / C`; `C` comes from the width constants and is not evaluated.
    pub w_min_over_c: f64,
    pub l_min: usize,
    /// `N ≤ 5`: below the approximation result's floor.
    pub below_n_floor: bool,
    /// The thresholds as printed, for audit (the doubled minus is read as a positive power of `1/ε`).
    pub printed_thresholds: [String; 3],
}

/// `η = 2(18d+55)`.
pub fn eta(d: usize) -> f64 {
    2.0 * (18.0 * d as f64 + 55.0)
}

pub fn apriori_sizes(epsilon: f64, d: usize, k: usize) -> Result<SizingPlan> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(PinnError::Config(format!("need 0 < ε < 1, got {epsilon}")));
    }
    let e = eta(d);
    let kf = k as f64;
    if kf <= e {
        return Err(PinnError::Hypothesis(format!("need k > η = {e}, got k = {k}")));
    }
    let df = d as f64;
    let inv = (1.0 / epsilon).log10();
    let span = kf - e;
    let ceil1 = |log10: f64| 10f64.powf(log10).ceil().max(1.0);
    let log10_m_pde = (df + 1.0) * (e - 1.0) / span * inv;
    let log10_m_t = df * (e - 1.0) / span * inv;
    let log10_m_s = 2.0 * df * (e - 1.0) / span * inv;
    let big_n = 10f64.powf(inv / span);
    Ok(SizingPlan {
        epsilon,
        d,
        k,
        eta: e,
        big_n,
        log10_m_pde,
        log10_m_t,
        log10_m_s,
        m_pde: ceil1(log10_m_pde),
        m_t: ceil1(log10_m_t),
        m_s: ceil1(log10_m_s),
        r_min: big_n * (1.0 / epsilon).ln(),
        w_min_over_c: 10f64.powf((df + 1.0) * inv / span),
        l_min: 3,
        below_n_floor: big_n <= 5.0,
        printed_thresholds: [
            "M_PDE >= eps^(-(-(d+1)(eta-1))/(k-eta))".into(),
            "M_t >= eps^(-(-d(eta-1))/(k-eta))".into(),
            "M_s >= eps^(-(-2d(eta-1))/(k-eta))".into(),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example() -> TheoryInputs {
        TheoryInputs::new(2, 4, 2, 6, 1.0, 0.5, vec![-1, -1], vec![1, 1])
    }

    #[test]
    fn widths_golden() {
        assert_eq!(q1_widths(&example()).unwrap(), (338, 19440));
        assert_eq!(binomial(7, 4), 35.0);
    }

    #[test]
    fn widths_need_n_above_five() {
        let mut i = example();
        i.big_n = 5;
        assert!(matches!(q1_widths(&i), Err(PinnError::Hypothesis(_))));
    }

    #[test]
    fn width1_changes_only_through_ceiling_term() {
        let a = example();
        let mut b = example();
        b.big_n = 7;
        let (w1a, _) = q1_widths(&a).unwrap();
        let (w1b, _) = q1_widths(&b).unwrap();
        // ⌈6·4.5⌉ − ⌈5·4.5⌉ = 27 − 23.
        assert_eq!(w1b - w1a, 4);
    }

    #[test]
    fn lambda_zero_ignores_beta() {
        let mut i = TheoryInputs::new(1, 4, 2, 6, 1.0, 0.5, vec![-1], vec![1]);
        i.seminorm_hk1 = Some(0.3);
        i.w_inf = Some([0.1, 0.2, 0.3]);
        assert_eq!(lambda_beta(&i, 0).unwrap().lambda, 18.0);
    }

    #[test]
    fn lambda_ratio_by_direct_evaluation() {
        let mut i = example();
        i.seminorm_hk1 = Some(2.0);
        i.w_inf = Some([0.5, 3.0, 7.0]);
        let l1 = lambda_beta(&i, 1).unwrap();
        let l2 = lambda_beta(&i, 2).unwrap();
        let p = (i.d + i.k + 4) as f64;
        let n = i.big_n as f64;
        let ratio = 2.0 * (l2.beta * n.powf(p)).ln().powi(2) / (l1.beta * n.powf(p)).ln();
        assert!((l2.lambda / l1.lambda - ratio).abs() < 1e-12 * ratio);
    }

    #[test]
    fn beta_inverse_in_delta() {
        let mut i = example();
        i.seminorm_hk1 = Some(2.0);
        i.w_inf = Some([0.5, 3.0, 7.0]);
        let b1 = lambda_beta(&i, 1).unwrap().beta;
        i.delta = 2.0;
        let b2 = lambda_beta(&i, 1).unwrap().beta;
        assert!((b1 / b2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn missing_seminorms_error() {
        assert!(matches!(lambda_beta(&example(), 1), Err(PinnError::MissingInput(_))));
    }

    #[test]
    fn c_l_by_hand() {
        // d = 1, k = 4, l = 0: sqrt(5!)/(⌈5/2⌉!)^{1} · (3√2/π)^5 · s.
        let mut i = TheoryInputs::new(1, 4, 2, 6, 1.0, 0.5, vec![0], vec![1]);
        i.seminorm_hk1 = Some(0.5);
        let expected = 120f64.sqrt() / 6.0 * (3.0 * 2f64.sqrt() / PI).powi(5) * 0.5;
        assert!((c_l(&i, 0).unwrap() - expected).abs() < 1e-12 * expected);
    }

    fn with_norms() -> TheoryInputs {
        let mut i = example();
        i.seminorm_hk1 = Some(1.5);
        i.w_inf = Some([0.2, 1.0, 4.0]);
        i
    }

    #[test]
    fn residual_bounds_structure() {
        let dom = BoxDomain::cube(2, -0.5, 0.5, 0.5).unwrap();
        let i = with_norms();
        let b = q1_residual_bounds(&i, &dom, 0.0, false).unwrap();
        let l1 = lambda_beta(&i, 1).unwrap();
        let l2 = lambda_beta(&i, 2).unwrap();
        let n = i.big_n as f64;
        let c_t = 24f64.sqrt();
        assert!((b.su - c_t * l1.c_l * l1.lambda * n.powi(-4)).abs() < 1e-12 * b.su);
        let pde = (l2.c_l + 2f64.sqrt()) * l2.lambda * n.powi(-3);
        assert!((b.pde - pde).abs() < 1e-12 * pde);
        assert!((b.grad - 2f64.sqrt() * b.u1).abs() < 1e-12 * b.grad);
        assert_eq!(b.u0, b.su);
        assert!(matches!(q1_residual_bounds(&i, &dom, 0.0, true), Err(PinnError::MissingInput(_))));
    }

    #[test]
    fn doubling_n_shrinks_dominant_term() {
        let dom = BoxDomain::cube(2, -0.5, 0.5, 0.5).unwrap();
        let mut a = with_norms();
        a.big_n = 40;
        let mut b = a.clone();
        b.big_n = 80;
        let ra = q1_residual_bounds(&a, &dom, 0.0, false).unwrap();
        let rb = q1_residual_bounds(&b, &dom, 0.0, false).unwrap();
        let ratio = ra.sut / rb.sut;
        // 8× from N^{−3}, reduced by the squared-log growth.
        let la = lambda_beta(&a, 2).unwrap().lambda;
        let lb = lambda_beta(&b, 2).unwrap().lambda;
        assert!((ratio - 8.0 * la / lb).abs() < 1e-9 * ratio);
        assert!(ratio > 5.0 && ratio < 8.0);
    }

    #[test]
    fn rate_slope_and_monotonicity() {
        let ns: Vec<usize> = (0..12).map(|i| (10.0 * 2f64.powi(i)) as usize).collect();
        let rows = rate_curves(2, 4.0, &ns).unwrap();
        let xy: Vec<(f64, f64)> = rows.iter().map(|r| ((r.big_n as f64).ln(), r.generalization.ln())).collect();
        let slope = crate::quadrature::tests::fit_slope(&xy);
        assert!((slope + 3.0).abs() < 0.5, "slope {slope}");
        let dense = rate_curves(2, 4.0, &(6..400).collect::<Vec<_>>()).unwrap();
        assert!(dense.windows(2).all(|w| w[1].generalization < w[0].generalization));
        assert!(dense.iter().all(|r| r.training_total > 0.0 && r.generalization > 0.0));
        assert!(rate_curves(2, 4.0, &[5]).is_err());
    }

    #[test]
    fn rate_csv_layout() {
        let mut buf = Vec::new();
        write_rate_csv(&rate_curves(1, 4.0, &[6, 7]).unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("N,generalization,"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn apriori_eta_and_errors() {
        assert_eq!(eta(1), 146.0);
        assert!(matches!(apriori_sizes(0.1, 1, 146), Err(PinnError::Hypothesis(_))));
        let p = apriori_sizes(0.999_999, 1, 200).unwrap();
        assert!((p.big_n - 1.0).abs() < 1e-6);
        assert!(p.below_n_floor);
        assert_eq!(p.l_min, 3);
    }

    #[test]
    fn apriori_thresholds_grow_as_epsilon_shrinks() {
        let mut prev: Option<SizingPlan> = None;
        for e in [0.5, 0.2, 0.1, 0.05, 0.02, 0.01] {
            let p = apriori_sizes(e, 2, 300).unwrap();
            if let Some(q) = prev {
                assert!(p.log10_m_pde > q.log10_m_pde && p.log10_m_t > q.log10_m_t && p.log10_m_s > q.log10_m_s);
                assert!(p.big_n > q.big_n && p.r_min > q.r_min && p.w_min_over_c > q.w_min_over_c);
            }
            assert!(p.m_pde >= 1.0 && p.m_t >= 1.0 && p.m_s >= 1.0);
            prev = Some(p);
        }
    }

    #[test]
    fn r_from_gamma_formula() {
        assert_eq!(TheoryInputs::r_from_gamma(3, 0.0), 0.0);
        assert!((TheoryInputs::r_from_gamma(3, 0.5) - 1.0).abs() < 1e-15);
        let mut i = example();
        i.gamma = Some(0.5);
        i.r = Some(1.0);
        assert!(i.validate().is_err());
    }

    proptest! {
        #[test]
        fn widths_positive_and_monotone(d in 1usize..4, k in 4usize..8, n in 2usize..5, big_n in 6usize..20) {
            let lo = vec![-1; d];
            let hi = vec![1; d];
            let a = TheoryInputs::new(d, k, n, big_n, 1.0, 0.5, lo.clone(), hi.clone());
            let b = TheoryInputs::new(d, k, n, big_n + 1, 1.0, 0.5, lo, hi);
            let (a1, a2) = q1_widths(&a).unwrap();
            let (b1, b2) = q1_widths(&b).unwrap();
            prop_assert!(a1 > 0 && a2 > 0);
            prop_assert!(b1 >= a1 && b2 > a2);
            prop_assert_eq!(q1_widths(&a).unwrap(), (a1, a2));
        }
    }
}
