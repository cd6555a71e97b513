//! Space-time box geometry, midpoint collocation grids and composite
//! midpoint integration.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{PinnError, Result};

/// `Ω × [0, T]` with `Ω = Π [lower_i, upper_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub horizon: f64,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, horizon: f64) -> Result<Self> {
        let b = Self { lower, upper, horizon };
        b.validate()?;
        Ok(b)
    }

    /// `[lo, hi]^d × [0, T]`.
    pub fn cube(d: usize, lo: f64, hi: f64, horizon: f64) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d], horizon)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(PinnError::Config("box bounds must be nonempty and of equal length".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(PinnError::Config("box requires finite lower_i < upper_i".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(PinnError::Config("horizon T must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = f64> + '_ {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a)
    }

    /// `|Ω|`.
    pub fn volume(&self) -> f64 {
        self.edges().product()
    }

    /// `|∂Ω|` (number of endpoints for `d = 1`).
    pub fn boundary_measure(&self) -> f64 {
        (0..self.dim()).map(|i| 2.0 * self.face_measure(i)).sum()
    }

    /// Measure of one face normal to axis `axis`.
    pub fn face_measure(&self, axis: usize) -> f64 {
        self.edges().enumerate().filter(|(j, _)| *j != axis).map(|(_, e)| e).product()
    }

    /// Diameter of `Ω`.
    pub fn diameter(&self) -> f64 {
        self.edges().map(|e| e * e).sum::<f64>().sqrt()
    }

    /// Diameter of `Ω × [0, T]`.
    pub fn spacetime_diameter(&self) -> f64 {
        (self.diameter().powi(2) + self.horizon * self.horizon).sqrt()
    }

    /// Radius of the largest ball inside `Ω × [0, T]`.
    pub fn spacetime_inradius(&self) -> f64 {
        0.5 * self.edges().fold(self.horizon, f64::min)
    }

    /// Whether `point` (space then time) lies in the closed space-time box.
    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        let d = self.dim();
        point.len() == d + 1
            && (0..d).all(|i| point[i] >= self.lower[i] - tol && point[i] <= self.upper[i] + tol)
            && point[d] >= -tol
            && point[d] <= self.horizon + tol
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|v| v * s).collect(),
            upper: self.upper.iter().map(|v| v * s).collect(),
            horizon: self.horizon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Interior,
    Boundary,
    Initial,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [Stratum::Interior, Stratum::Boundary, Stratum::Initial];

    pub fn name(self) -> &'static str {
        match self {
            Stratum::Interior => "interior",
            Stratum::Boundary => "boundary",
            Stratum::Initial => "initial",
        }
    }
}

/// Cells per axis for each stratum.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCounts {
    /// `d` spatial counts followed by the time count.
    pub interior: Vec<usize>,
    /// Spatial counts; the face normal to axis `i` uses every count except the `i`-th.
    pub boundary_space: Vec<usize>,
    pub boundary_time: usize,
    pub initial: Vec<usize>,
}

impl GridCounts {
    pub fn uniform(d: usize, interior: (usize, usize), boundary: (usize, usize), initial: usize) -> Self {
        let mut int = vec![interior.0; d];
        int.push(interior.1);
        Self {
            interior: int,
            boundary_space: vec![boundary.0; d],
            boundary_time: boundary.1,
            initial: vec![initial; d],
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.interior.len() != d + 1 || self.boundary_space.len() != d || self.initial.len() != d {
            return Err(PinnError::Config(format!("grid counts do not match spatial dimension {d}")));
        }
        let all = self.interior.iter().chain(&self.boundary_space).chain(&self.initial);
        if all.chain(std::iter::once(&self.boundary_time)).any(|&c| c == 0) {
            return Err(PinnError::Config("all grid counts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn interior_points(&self) -> usize {
        self.interior.iter().product()
    }

    pub fn boundary_points(&self) -> usize {
        let d = self.boundary_space.len();
        (0..d)
            .map(|i| 2 * self.boundary_time * self.face_spatial(i).iter().product::<usize>())
            .sum()
    }

    pub fn initial_points(&self) -> usize {
        self.initial.iter().product()
    }

    pub fn total_points(&self) -> usize {
        self.interior_points() + self.boundary_points() + self.initial_points()
    }

    fn face_spatial(&self, axis: usize) -> Vec<usize> {
        self.boundary_space.iter().enumerate().filter(|(j, _)| *j != axis).map(|(_, &c)| c).collect()
    }

    /// Every count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let f = |v: &Vec<usize>| v.iter().map(|c| c * factor).collect();
        Self {
            interior: f(&self.interior),
            boundary_space: f(&self.boundary_space),
            boundary_time: self.boundary_time * factor,
            initial: f(&self.initial),
        }
    }
}

/// Weighted points of one stratum; coordinates are space then time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.chunks(self.dim).zip(self.weights.iter().copied())
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn push(&mut self, p: &[f64], w: f64) {
        self.points.extend_from_slice(p);
        self.weights.push(w);
    }
}

/// Training sets on the interior, the lateral boundary and the initial slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollocationSets {
    pub domain: BoxDomain,
    pub counts: GridCounts,
    pub interior: PointSet,
    pub boundary: PointSet,
    pub initial: PointSet,
}

/// Point counts `(M_PDE, M_s, M_t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrataSizes {
    pub m_pde: usize,
    pub m_s: usize,
    pub m_t: usize,
}

impl StrataSizes {
    pub fn total(&self) -> usize {
        self.m_pde + self.m_s + self.m_t
    }
}

impl CollocationSets {
    pub fn stratum(&self, s: Stratum) -> &PointSet {
        match s {
            Stratum::Interior => &self.interior,
            Stratum::Boundary => &self.boundary,
            Stratum::Initial => &self.initial,
        }
    }

    pub fn sizes(&self) -> StrataSizes {
        StrataSizes {
            m_pde: self.interior.len(),
            m_s: self.boundary.len(),
            m_t: self.initial.len(),
        }
    }

    /// CSV with columns `stratum, x1..xd, t, weight`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.domain.dim();
        let mut header = vec!["stratum".to_string()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        header.push("t".into());
        header.push("weight".into());
        writeln!(w, "{}", header.join(","))?;
        for s in Stratum::ALL {
            for (p, wt) in self.stratum(s).iter() {
                let coords: Vec<String> = p.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{},{},{}", s.name(), coords.join(","), wt)?;
            }
        }
        Ok(())
    }
}

/// Midpoints of `n` equal cells of `[a, b]`.
fn midpoints(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / n as f64;
    (0..n).map(|i| a + (i as f64 + 0.5) * h).collect()
}

/// Visits the tensor product of coordinate lists; the last axis varies fastest.
fn tensor(axes: &[Vec<f64>], mut visit: impl FnMut(&[f64])) {
    let n: usize = axes.iter().map(|a| a.len()).product();
    let mut p = vec![0.0; axes.len()];
    for mut k in 0..n {
        for (j, axis) in axes.iter().enumerate().rev() {
            p[j] = axis[k % axis.len()];
            k /= axis.len();
        }
        visit(&p);
    }
}

/// Midpoint grid on `Ω × [0, T]` with `counts[i]` cells along axis `i` (time last).
pub fn spacetime_grid(domain: &BoxDomain, counts: &[usize]) -> Result<PointSet> {
    let d = domain.dim();
    if counts.len() != d + 1 || counts.contains(&0) {
        return Err(PinnError::Config(format!("space-time grid needs {} positive counts, got {counts:?}", d + 1)));
    }
    let mut set = PointSet { dim: d + 1, ..Default::default() };
    let mut axes: Vec<Vec<f64>> = (0..d).map(|i| midpoints(domain.lower[i], domain.upper[i], counts[i])).collect();
    axes.push(midpoints(0.0, domain.horizon, counts[d]));
    let w = domain.volume() * domain.horizon / counts.iter().product::<usize>() as f64;
    tensor(&axes, |p| set.push(p, w));
    Ok(set)
}

/// Regular midpoint grids on each stratum with measure-weighted weights.
pub fn build_sets(domain: &BoxDomain, counts: &GridCounts) -> Result<CollocationSets> {
    domain.validate()?;
    let d = domain.dim();
    counts.validate(d)?;
    let t_end = domain.horizon;
    let dim = d + 1;

    let interior = spacetime_grid(domain, &counts.interior)?;

    let mut boundary = PointSet { dim, ..Default::default() };
    for axis in 0..d {
        let face_axes: Vec<Vec<f64>> = (0..d)
            .filter(|&j| j != axis)
            .map(|j| midpoints(domain.lower[j], domain.upper[j], counts.boundary_space[j]))
            .chain(std::iter::once(midpoints(0.0, t_end, counts.boundary_time)))
            .collect();
        let per_face: usize = face_axes.iter().map(|a| a.len()).product();
        let w = domain.face_measure(axis) * t_end / per_face as f64;
        for side in [domain.lower[axis], domain.upper[axis]] {
            tensor(&face_axes, |q| {
                let mut p = Vec::with_capacity(dim);
                p.extend_from_slice(&q[..axis]);
                p.push(side);
                p.extend_from_slice(&q[axis..]);
                boundary.push(&p, w);
            });
        }
    }

    let mut initial = PointSet { dim, ..Default::default() };
    let axes: Vec<Vec<f64>> = (0..d).map(|i| midpoints(domain.lower[i], domain.upper[i], counts.initial[i])).collect();
    let w = domain.volume() / counts.initial_points() as f64;
    tensor(&axes, |q| {
        let mut p = q.to_vec();
        p.push(0.0);
        initial.push(&p, w);
    });

    Ok(CollocationSets {
        domain: domain.clone(),
        counts: counts.clone(),
        interior,
        boundary,
        initial,
    })
}

/// `Σ w_m f(y_m)`.
pub fn midpoint_integrate(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(PinnError::Contract(format!(
            "{} values for {} quadrature weights",
            values.len(),
            weights.len()
        )));
    }
    Ok(values.iter().zip(weights).map(|(v, w)| v * w).sum())
}

/// Integrates `f` over a point set.
pub fn integrate_fn(set: &PointSet, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    set.iter().map(|(p, w)| w * f(p)).sum()
}

/// `c_geom · ‖f‖_{C²} · M^{-2/dim}`.
pub fn quadrature_error_bound(c_geom: f64, f_c2_norm: f64, m: usize, dim: usize) -> f64 {
    c_geom * f_c2_norm * (m as f64).powf(-2.0 / dim as f64)
}
