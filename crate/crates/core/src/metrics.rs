//! Errors against the exact solution, measured on fine midpoint grids.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::deriv::{JetField, JetPlan};
use crate::error::{PinnError, Result};
use crate::problem::{ExactSolution, ProblemSpec};
use crate::quadrature::{spacetime_grid, GridCounts};

/// Points per evaluation batch, bounds memory on million-point grids.
const BATCH: usize = 1 << 14;

/// `∫|û|²`, `∫|û_t|²` and their sum over `Ω × [0, T]`, `û = u_θ − u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct H1Error {
    pub l2_part: f64,
    pub dt_part: f64,
    pub sum: f64,
}

impl H1Error {
    /// `√sum`, the H¹([0,T]; L²(Ω)) norm of the error.
    pub fn norm(&self) -> f64 {
        self.sum.sqrt()
    }

    /// `√l2_part`.
    pub fn l2(&self) -> f64 {
        self.l2_part.sqrt()
    }
}

/// Metric grid: `factor` times the training interior counts along every axis.
pub fn metric_counts(training: &GridCounts, factor: usize) -> Vec<usize> {
    training.interior.iter().map(|&n| n * factor.max(1)).collect()
}

fn exact(problem: &ProblemSpec) -> Result<&ExactSolution> {
    problem
        .exact
        .as_ref()
        .ok_or_else(|| PinnError::Unsupported(format!("problem `{}` has no exact solution", problem.name)))
}

/// `√(∫∫ |u_θ − u|²)` by the midpoint rule on a grid with `counts` cells per axis.
pub fn total_error_l2(field: &dyn JetField, problem: &ProblemSpec, counts: &[usize]) -> Result<f64> {
    Ok(accumulate(field, problem, counts, false)?.l2())
}

/// Both parts of the H¹([0,T]; L²(Ω)) error quantity.
pub fn total_error_h1(field: &dyn JetField, problem: &ProblemSpec, counts: &[usize]) -> Result<H1Error> {
    accumulate(field, problem, counts, true)
}

fn accumulate(field: &dyn JetField, problem: &ProblemSpec, counts: &[usize], with_dt: bool) -> Result<H1Error> {
    let ex = exact(problem)?;
    let dim = problem.dim() + 1;
    if field.input_dim() != dim {
        return Err(PinnError::Config(format!("field takes {} inputs, problem needs {dim}", field.input_dim())));
    }
    let grid = spacetime_grid(&problem.domain, counts)?;
    let plan = if with_dt { JetPlan::new(dim, vec![dim - 1], &[])? } else { JetPlan::value_only(dim) };
    let (mut l2, mut dt) = (0.0, 0.0);
    for (chunk, weights) in grid.points.chunks(BATCH * dim).zip(grid.weights.chunks(BATCH)) {
        let jets = field.jets(chunk, &plan)?;
        for (i, (z, w)) in chunk.chunks(dim).zip(weights).enumerate() {
            let e = jets.value(i) - ex.value(z);
            l2 += w * e * e;
            if with_dt {
                let et = jets.first(i, dim - 1).unwrap_or(0.0) - ex.dt(z);
                dt += w * et * et;
            }
        }
    }
    if !(l2.is_finite() && dt.is_finite()) {
        return Err(PinnError::NonFinite {
            quantity: "total error".into(),
            stratum: "interior".into(),
            point: vec![],
        });
    }
    Ok(H1Error { l2_part: l2, dt_part: dt, sum: l2 + dt })
}

/// `|u_θ − u|` on the nodes of a regular spatial grid (endpoints included) at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorField {
    pub time: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
    /// Row-major, last axis fastest.
    pub values: Vec<f64>,
}

impl ErrorField {
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// One CSV row per index of the leading axes, one column per node of the last axis.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# t={} lower={:?} upper={:?} counts={:?} last-axis-columns",
            self.time, self.lower, self.upper, self.counts
        )?;
        let cols = *self.counts.last().unwrap_or(&1);
        for row in self.values.chunks(cols.max(1)) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

pub fn pointwise_error_field(field: &dyn JetField, problem: &ProblemSpec, time: f64, counts: &[usize]) -> Result<ErrorField> {
    let ex = exact(problem)?;
    let domain = &problem.domain;
    let d = domain.dim();
    if !(0.0..=domain.horizon).contains(&time) {
        return Err(PinnError::Config(format!("time {time} outside [0, {}]", domain.horizon)));
    }
    if counts.len() != d || counts.iter().any(|&n| n < 2) {
        return Err(PinnError::Config(format!("need {d} node counts ≥ 2, got {counts:?}")));
    }
    let total: usize = counts.iter().product();
    let mut points = Vec::with_capacity(total * (d + 1));
    for mut k in 0..total {
        let mut z = vec![0.0; d + 1];
        for j in (0..d).rev() {
            let i = k % counts[j];
            k /= counts[j];
            z[j] = domain.lower[j] + (domain.upper[j] - domain.lower[j]) * i as f64 / (counts[j] - 1) as f64;
        }
        z[d] = time;
        points.extend_from_slice(&z);
    }
    let jets = field.jets(&points, &JetPlan::value_only(d + 1))?;
    let values = points
        .chunks(d + 1)
        .enumerate()
        .map(|(i, z)| (jets.value(i) - ex.value(z)).abs())
        .collect();
    Ok(ErrorField {
        time,
        lower: domain.lower.clone(),
        upper: domain.upper.clone(),
        counts: counts.to_vec(),
        values,
    })
}
