//! Pointwise residuals, the quadrature training error and its gradient.

use serde::{Deserialize, Serialize};

use crate::deriv::{fd_check_gradient, jet_loss_and_grad, GradCheckReport, JetField, JetPlan};
use crate::error::{PinnError, Result};
use crate::net::MlpParams;
use crate::problem::ProblemSpec;
use crate::quadrature::{build_sets, CollocationSets, GridCounts, PointSet, Stratum, StrataSizes};

/// Residuals relevant to one stratum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stratum", rename_all = "lowercase")]
pub enum ResidualVector {
    Interior { pde: f64 },
    Boundary { su: f64, sut: f64 },
    Initial { u0: f64, u1: f64, grad: Vec<f64> },
}

impl ResidualVector {
    pub fn is_finite(&self) -> bool {
        match self {
            ResidualVector::Interior { pde } => pde.is_finite(),
            ResidualVector::Boundary { su, sut } => su.is_finite() && sut.is_finite(),
            ResidualVector::Initial { u0, u1, grad } => u0.is_finite() && u1.is_finite() && grad.iter().all(|g| g.is_finite()),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            ResidualVector::Interior { pde } => pde.abs(),
            ResidualVector::Boundary { su, sut } => su.abs().max(sut.abs()),
            ResidualVector::Initial { u0, u1, grad } => grad.iter().fold(u0.abs().max(u1.abs()), |m, g| m.max(g.abs())),
        }
    }
}

/// Squared training-error components and their total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingErrorReport {
    pub pde: f64,
    pub su: f64,
    pub sut: f64,
    pub u0: f64,
    pub u1: f64,
    pub grad: f64,
    pub total_sq: f64,
    pub total: f64,
    pub sizes: StrataSizes,
}

impl TrainingErrorReport {
    fn assemble(parts: [f64; 6], sizes: StrataSizes) -> Self {
        let [pde, su, sut, u0, u1, grad] = parts;
        let total_sq = pde + su + sut + u0 + u1 + grad;
        Self {
            pde,
            su,
            sut,
            u0,
            u1,
            grad,
            total_sq,
            total: total_sq.sqrt(),
            sizes,
        }
    }

    /// `(name, squared value)` in a fixed order.
    pub fn components(&self) -> [(&'static str, f64); 6] {
        [
            ("pde", self.pde),
            ("su", self.su),
            ("sut", self.sut),
            ("u0", self.u0),
            ("u1", self.u1),
            ("grad", self.grad),
        ]
    }
}

/// Jets needed by each stratum's residuals.
pub fn stratum_plan(stratum: Stratum, d: usize) -> JetPlan {
    let dim = d + 1;
    match stratum {
        Stratum::Interior => JetPlan::full(dim),
        Stratum::Boundary => JetPlan::new(dim, vec![d], &[]).expect("valid plan"),
        Stratum::Initial => JetPlan::new(dim, (0..dim).collect(), &[]).expect("valid plan"),
    }
}

fn check_dims(field: &dyn JetField, problem: &ProblemSpec) -> Result<()> {
    if field.input_dim() != problem.dim() + 1 {
        return Err(PinnError::Contract(format!(
            "function has {} inputs, problem needs {} (space + time)",
            field.input_dim(),
            problem.dim() + 1
        )));
    }
    Ok(())
}

/// Residuals from jet components laid out per [`stratum_plan`].
fn residuals_from(problem: &ProblemSpec, stratum: Stratum, plan: &JetPlan, z: &[f64], c: &[f64]) -> ResidualVector {
    let d = problem.dim();
    let x = &z[..d];
    let dt = || c[plan.first_index(d).expect("dt in plan")];
    match stratum {
        Stratum::Interior => {
            let lap: f64 = (0..d).map(|i| c[plan.second_index(i).expect("dxx in plan")]).sum();
            let dtt = c[plan.second_index(d).expect("dtt in plan")];
            let (f, _) = problem.nonlinearity.eval(x, c[0]);
            ResidualVector::Interior {
                pde: dtt - lap + problem.damping_at(x) * dt() + f,
            }
        }
        Stratum::Boundary => ResidualVector::Boundary { su: c[0], sut: dt() },
        Stratum::Initial => ResidualVector::Initial {
            u0: c[0] - problem.u0.eval(x),
            u1: dt() - problem.u1.eval(x),
            grad: (0..d)
                .map(|i| c[plan.first_index(i).expect("dx in plan")] - problem.grad_u0[i].eval(x))
                .collect(),
        },
    }
}

fn on_stratum(problem: &ProblemSpec, stratum: Stratum, z: &[f64]) -> bool {
    const TOL: f64 = 1e-12;
    let dom = &problem.domain;
    let d = dom.dim();
    if !dom.contains(z, TOL) {
        return false;
    }
    match stratum {
        Stratum::Interior => true,
        Stratum::Boundary => (0..d).any(|i| (z[i] - dom.lower[i]).abs() <= TOL || (z[i] - dom.upper[i]).abs() <= TOL),
        Stratum::Initial => z[d].abs() <= TOL,
    }
}

/// Residuals of `field` at `point` (space then time) on the named stratum.
pub fn residual_at(field: &dyn JetField, problem: &ProblemSpec, point: &[f64], stratum: Stratum) -> Result<ResidualVector> {
    check_dims(field, problem)?;
    if !on_stratum(problem, stratum, point) {
        return Err(PinnError::Contract(format!("point {point:?} is not on the {} stratum", stratum.name())));
    }
    let plan = stratum_plan(stratum, problem.dim());
    let jets = field.jets(point, &plan)?;
    Ok(residuals_from(problem, stratum, &plan, point, jets.components(0)))
}

/// Residuals at many points of one stratum (points flattened, space then time).
pub fn residuals_on(field: &dyn JetField, problem: &ProblemSpec, points: &[f64], stratum: Stratum) -> Result<Vec<ResidualVector>> {
    check_dims(field, problem)?;
    let dim = problem.dim() + 1;
    if let Some(z) = points.chunks(dim).find(|z| !on_stratum(problem, stratum, z)) {
        return Err(PinnError::Contract(format!("point {z:?} is not on the {} stratum", stratum.name())));
    }
    let plan = stratum_plan(stratum, problem.dim());
    let jets = field.jets(points, &plan)?;
    Ok(points
        .chunks(dim)
        .enumerate()
        .map(|(i, z)| residuals_from(problem, stratum, &plan, z, jets.components(i)))
        .collect())
}

fn non_finite(stratum: Stratum, z: &[f64]) -> PinnError {
    PinnError::NonFinite {
        quantity: "residual".into(),
        stratum: stratum.name().into(),
        point: z.to_vec(),
    }
}

/// Quadrature sums of squared residuals on one stratum.
fn stratum_sums(field: &dyn JetField, problem: &ProblemSpec, set: &PointSet, stratum: Stratum) -> Result<Vec<f64>> {
    let plan = stratum_plan(stratum, problem.dim());
    let jets = field.jets(&set.points, &plan)?;
    let mut sums = vec![0.0; 3];
    for (i, (z, w)) in set.iter().enumerate() {
        let r = residuals_from(problem, stratum, &plan, z, jets.components(i));
        if !r.is_finite() {
            return Err(non_finite(stratum, z));
        }
        match r {
            ResidualVector::Interior { pde } => sums[0] += w * pde * pde,
            ResidualVector::Boundary { su, sut } => {
                sums[0] += w * su * su;
                sums[1] += w * sut * sut;
            }
            ResidualVector::Initial { u0, u1, grad } => {
                sums[0] += w * u0 * u0;
                sums[1] += w * u1 * u1;
                sums[2] += w * grad.iter().map(|g| g * g).sum::<f64>();
            }
        }
    }
    Ok(sums)
}

/// Measure-weighted midpoint quadrature of every squared residual.
pub fn training_error(field: &dyn JetField, sets: &CollocationSets, problem: &ProblemSpec) -> Result<TrainingErrorReport> {
    check_dims(field, problem)?;
    if sets.domain != problem.domain {
        return Err(PinnError::Contract("collocation sets were built on a different domain".into()));
    }
    let int = stratum_sums(field, problem, &sets.interior, Stratum::Interior)?;
    let bnd = stratum_sums(field, problem, &sets.boundary, Stratum::Boundary)?;
    let ini = stratum_sums(field, problem, &sets.initial, Stratum::Initial)?;
    Ok(TrainingErrorReport::assemble(
        [int[0], bnd[0], bnd[1], ini[0], ini[1], ini[2]],
        sets.sizes(),
    ))
}

/// The same quadrature on a finer grid, standing in for the integrals.
pub fn generalization_error_estimate(field: &dyn JetField, problem: &ProblemSpec, counts: &GridCounts) -> Result<TrainingErrorReport> {
    let sets = build_sets(&problem.domain, counts)?;
    training_error(field, &sets, problem)
}

/// `E_T²` and its gradient with respect to every parameter.
pub fn loss_and_gradient(params: &MlpParams, sets: &CollocationSets, problem: &ProblemSpec) -> Result<(f64, Vec<f64>)> {
    check_dims(params, problem)?;
    let d = problem.dim();
    let mut grad = vec![0.0; params.as_slice().len()];

    let plan = stratum_plan(Stratum::Interior, d);
    let (i_dt, i_dtt) = (plan.first_index(d).unwrap(), plan.second_index(d).unwrap());
    let i_dxx: Vec<usize> = (0..d).map(|i| plan.second_index(i).unwrap()).collect();
    let set = &sets.interior;
    let interior = jet_loss_and_grad(
        params,
        &set.points,
        &plan,
        |p, z, c, adj| {
            let x = &z[..d];
            let a = problem.damping_at(x);
            let (f, df) = problem.nonlinearity.eval(x, c[0]);
            let r = c[i_dtt] - i_dxx.iter().map(|&k| c[k]).sum::<f64>() + a * c[i_dt] + f;
            if !r.is_finite() {
                return Err(non_finite(Stratum::Interior, z));
            }
            let w = set.weights[p];
            let g = 2.0 * w * r;
            adj[i_dtt] = g;
            for &k in &i_dxx {
                adj[k] = -g;
            }
            adj[i_dt] = g * a;
            adj[0] = g * df;
            Ok(w * r * r)
        },
        &mut grad,
    )?;

    let plan = stratum_plan(Stratum::Boundary, d);
    let set = &sets.boundary;
    let boundary = jet_loss_and_grad(
        params,
        &set.points,
        &plan,
        |p, z, c, adj| {
            if !(c[0].is_finite() && c[1].is_finite()) {
                return Err(non_finite(Stratum::Boundary, z));
            }
            let w = set.weights[p];
            adj[0] = 2.0 * w * c[0];
            adj[1] = 2.0 * w * c[1];
            Ok(w * (c[0] * c[0] + c[1] * c[1]))
        },
        &mut grad,
    )?;

    let plan = stratum_plan(Stratum::Initial, d);
    let set = &sets.initial;
    let initial = jet_loss_and_grad(
        params,
        &set.points,
        &plan,
        |p, z, c, adj| {
            let x = &z[..d];
            let w = set.weights[p];
            let r0 = c[0] - problem.u0.eval(x);
            let r1 = c[1 + d] - problem.u1.eval(x);
            adj[0] = 2.0 * w * r0;
            adj[1 + d] = 2.0 * w * r1;
            let mut sum = r0 * r0 + r1 * r1;
            for i in 0..d {
                let g = c[1 + i] - problem.grad_u0[i].eval(x);
                adj[1 + i] = 2.0 * w * g;
                sum += g * g;
            }
            if !sum.is_finite() {
                return Err(non_finite(Stratum::Initial, z));
            }
            Ok(w * sum)
        },
        &mut grad,
    )?;

    Ok((interior + boundary + initial, grad))
}

/// `∂E_T²/∂θ`.
pub fn loss_gradient(params: &MlpParams, sets: &CollocationSets, problem: &ProblemSpec) -> Result<Vec<f64>> {
    loss_and_gradient(params, sets, problem).map(|(_, g)| g)
}

/// Compares [`loss_gradient`] with central differences of `E_T²`.
pub fn fd_check_loss(params: &MlpParams, sets: &CollocationSets, problem: &ProblemSpec, h: f64) -> Result<GradCheckReport> {
    let g = loss_gradient(params, sets, problem)?;
    fd_check_gradient(params, &g, h, |q| training_error(q, sets, problem).map(|r| r.total_sq))
}
