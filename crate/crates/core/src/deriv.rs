//! Exact space-time derivatives of a network and gradients of jet-based
//! losses with respect to the parameters.
//!
//! A batch of points is pushed through the network carrying, per point, the
//! value plus first- and second-order directional tangents along selected
//! input axes. Every jet component of a layer is stored as a column block of
//! one `width x (components * batch)` matrix, so each affine layer is a
//! single matrix product. Parameter gradients of any loss built from the
//! output jets are obtained by reverse accumulation through the same tape.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use crate::error::{PinnError, Result};
use crate::net::{layer_views_mut, MlpParams};

/// Number of points processed per block.
pub const CHUNK: usize = 32;

/// Network value and the derivatives entering the residuals at one point.
///
/// The last input coordinate is time; the others are spatial.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Jet {
    pub value: f64,
    pub dt: f64,
    pub dtt: f64,
    pub grad_x: Vec<f64>,
    pub laplacian: f64,
}

impl Jet {
    pub fn zero(spatial_dim: usize) -> Self {
        Self {
            grad_x: vec![0.0; spatial_dim],
            ..Default::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.dt.is_finite()
            && self.dtt.is_finite()
            && self.laplacian.is_finite()
            && self.grad_x.iter().all(|g| g.is_finite())
    }
}

/// Which tangents to propagate.
///
/// Component layout per point: `[value, first(first[0]), .., second(first[second[0]]), ..]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JetPlan {
    dim: usize,
    first: Vec<usize>,
    second: Vec<usize>,
}

impl JetPlan {
    /// `first`: input axes carrying a first-order tangent. `second`: subset
    /// of `first` (as axes) that also carry the second-order tangent.
    pub fn new(dim: usize, first: Vec<usize>, second_axes: &[usize]) -> Result<Self> {
        if first.iter().any(|&a| a >= dim) {
            return Err(PinnError::Contract(format!("jet axis out of range for input dim {dim}")));
        }
        let second = second_axes
            .iter()
            .map(|ax| {
                first
                    .iter()
                    .position(|f| f == ax)
                    .ok_or_else(|| PinnError::Contract(format!("second-order axis {ax} lacks a first-order tangent")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim, first, second })
    }

    pub fn value_only(dim: usize) -> Self {
        Self { dim, first: vec![], second: vec![] }
    }

    /// All first and pure second derivatives.
    pub fn full(dim: usize) -> Self {
        Self {
            dim,
            first: (0..dim).collect(),
            second: (0..dim).collect(),
        }
    }

    pub fn components(&self) -> usize {
        1 + self.first.len() + self.second.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Component index of `∂/∂x_axis`.
    pub fn first_index(&self, axis: usize) -> Option<usize> {
        self.first.iter().position(|&a| a == axis).map(|i| 1 + i)
    }

    /// Component index of `∂²/∂x_axis²`.
    pub fn second_index(&self, axis: usize) -> Option<usize> {
        let fi = self.first.iter().position(|&a| a == axis)?;
        self.second.iter().position(|&s| s == fi).map(|i| 1 + self.first.len() + i)
    }
}

/// Buffers of one forward pass, reused across blocks.
///
/// Per hidden layer: pre-activations and activations (`width x nc*batch`)
/// and the first three activation derivatives at the value block
/// (`width x batch`). Matrices are row-major and packed, so a shorter final
/// block uses a prefix of each buffer.
struct Tape {
    nc: usize,
    batch: usize,
    widths: Vec<usize>,
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    s1: Vec<Vec<f64>>,
    s2: Vec<Vec<f64>>,
    s3: Vec<Vec<f64>>,
    output: Vec<f64>,
    // Backward scratch; `g` holds the output adjoint on entry to the reverse sweep.
    g: Vec<f64>,
    hbar: Vec<f64>,
}

fn view(buf: &[f64], rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &buf[..rows * cols]).expect("tape shape")
}

fn view_mut(buf: &mut [f64], rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut buf[..rows * cols]).expect("tape shape")
}

impl Tape {
    fn new(params: &MlpParams, plan: &JetPlan) -> Self {
        let arch = params.architecture();
        let nc = plan.components();
        let widths = arch.widths.clone();
        let hidden = &widths[1..widths.len() - 1];
        let cols = nc * CHUNK;
        let max_w = arch.max_width();
        let per_layer = |n: usize| hidden.iter().map(|w| vec![0.0; w * n]).collect::<Vec<_>>();
        Self {
            nc,
            batch: 0,
            input: vec![0.0; widths[0] * cols],
            pre: per_layer(cols),
            post: per_layer(cols),
            s1: per_layer(CHUNK),
            s2: per_layer(CHUNK),
            s3: per_layer(CHUNK),
            output: vec![0.0; cols],
            g: vec![0.0; max_w * cols],
            hbar: vec![0.0; max_w * cols],
            widths,
        }
    }

    fn cols(&self) -> usize {
        self.nc * self.batch
    }

    fn component(&self, c: usize, p: usize) -> f64 {
        self.output[c * self.batch + p]
    }

    /// Activations feeding layer `k` (1-based).
    fn layer_input(&self, k: usize) -> ArrayView2<'_, f64> {
        let buf = if k == 1 { &self.input } else { &self.post[k - 2] };
        view(buf, self.widths[k - 1], self.cols())
    }
}

fn check_points(params: &MlpParams, points: &[f64], plan: &JetPlan) -> Result<usize> {
    let dim = params.architecture().input_dim();
    if plan.dim != dim {
        return Err(PinnError::Contract(format!("jet plan has dim {}, network expects {dim}", plan.dim)));
    }
    if points.len() % dim != 0 {
        return Err(PinnError::Contract(format!(
            "flat point buffer of length {} is not a multiple of {dim}",
            points.len()
        )));
    }
    Ok(points.len() / dim)
}

fn forward_block(params: &MlpParams, points: &[f64], plan: &JetPlan, tape: &mut Tape) {
    let arch = params.architecture();
    let dim = plan.dim;
    let batch = points.len() / dim;
    let nf = plan.first.len();
    tape.batch = batch;
    let cols = tape.cols();

    let input = &mut tape.input[..dim * cols];
    input.fill(0.0);
    for p in 0..batch {
        for i in 0..dim {
            input[i * cols + p] = points[p * dim + i];
        }
    }
    for (fi, &axis) in plan.first.iter().enumerate() {
        input[axis * cols + (1 + fi) * batch..axis * cols + (2 + fi) * batch].fill(1.0);
    }

    let depth = arch.depth();
    for k in 1..=depth {
        let w = params.weights(k);
        let b = params.bias(k);
        let rows = w.nrows();
        let prev = view(if k == 1 { &tape.input } else { &tape.post[k - 2] }, w.ncols(), cols);
        let target = if k == depth { &mut tape.output } else { &mut tape.pre[k - 1] };
        let mut pre = view_mut(target, rows, cols);
        general_mat_mul(1.0, &w, &prev, 0.0, &mut pre);
        for (mut row, &bi) in pre.rows_mut().into_iter().zip(b.iter()) {
            row.slice_mut(s![..batch]).mapv_inplace(|v| v + bi);
        }
        if k == depth {
            break;
        }

        let l = k - 1;
        let (pre, post) = (&tape.pre[l], &mut tape.post[l]);
        let (s1, s2, s3) = (&mut tape.s1[l], &mut tape.s2[l], &mut tape.s3[l]);
        for i in 0..rows {
            let a = &pre[i * cols..(i + 1) * cols];
            let h = &mut post[i * cols..(i + 1) * cols];
            let r1 = &mut s1[i * batch..(i + 1) * batch];
            let r2 = &mut s2[i * batch..(i + 1) * batch];
            let r3 = &mut s3[i * batch..(i + 1) * batch];
            for p in 0..batch {
                let t = 1.0 - 2.0 / ((2.0 * a[p]).exp() + 1.0);
                let d1 = 1.0 - t * t;
                h[p] = t;
                r1[p] = d1;
                r2[p] = -2.0 * t * d1;
                r3[p] = -2.0 * d1 * d1 + 4.0 * t * t * d1;
            }
            for fi in 0..nf {
                let off = (1 + fi) * batch;
                for p in 0..batch {
                    h[off + p] = r1[p] * a[off + p];
                }
            }
            for (si, &fi) in plan.second.iter().enumerate() {
                let off1 = (1 + fi) * batch;
                let off2 = (1 + nf + si) * batch;
                for p in 0..batch {
                    let a1 = a[off1 + p];
                    h[off2 + p] = r2[p] * a1 * a1 + r1[p] * a[off2 + p];
                }
            }
        }
    }
}

/// Adjoint of hidden layer `l`'s activation: maps `∂L/∂post` (`hbar`) to `∂L/∂pre` (`abar`).
fn activation_backward(tape: &Tape, l: usize, plan: &JetPlan, hbar: &[f64], abar: &mut [f64]) {
    let nf = plan.first.len();
    let batch = tape.batch;
    let cols = tape.cols();
    let (pre, s1, s2, s3) = (&tape.pre[l], &tape.s1[l], &tape.s2[l], &tape.s3[l]);
    for i in 0..tape.widths[l + 1] {
        let hb = &hbar[i * cols..(i + 1) * cols];
        let a = &pre[i * cols..(i + 1) * cols];
        let r1 = &s1[i * batch..(i + 1) * batch];
        let r2 = &s2[i * batch..(i + 1) * batch];
        let r3 = &s3[i * batch..(i + 1) * batch];
        let ab = &mut abar[i * cols..(i + 1) * cols];
        for p in 0..batch {
            ab[p] = hb[p] * r1[p];
        }
        for fi in 0..nf {
            let off = (1 + fi) * batch;
            for p in 0..batch {
                ab[off + p] = hb[off + p] * r1[p];
                ab[p] += hb[off + p] * r2[p] * a[off + p];
            }
        }
        for (si, &fi) in plan.second.iter().enumerate() {
            let off1 = (1 + fi) * batch;
            let off2 = (1 + nf + si) * batch;
            for p in 0..batch {
                let g = hb[off2 + p];
                let a1 = a[off1 + p];
                ab[off2 + p] = g * r1[p];
                ab[off1 + p] += g * 2.0 * r2[p] * a1;
                ab[p] += g * (r3[p] * a1 * a1 + r2[p] * a[off2 + p]);
            }
        }
    }
}

/// Reverse sweep from the output adjoint stored in `tape.g`.
fn backward_block(params: &MlpParams, tape: &mut Tape, plan: &JetPlan, grad: &mut [f64]) {
    let arch = params.architecture();
    let depth = arch.depth();
    let batch = tape.batch;
    let cols = tape.cols();
    let mut g = std::mem::take(&mut tape.g);
    let mut hbar = std::mem::take(&mut tape.hbar);
    for k in (1..=depth).rev() {
        let gv = view(&g, tape.widths[k], cols);
        {
            let (mut gw, mut gb) = layer_views_mut(arch, k, grad);
            general_mat_mul(1.0, &gv, &tape.layer_input(k).t(), 1.0, &mut gw);
            for (gbi, row) in gb.iter_mut().zip(gv.rows()) {
                *gbi += row.slice(s![..batch]).sum();
            }
        }
        if k == 1 {
            break;
        }
        let w = params.weights(k);
        let prev_rows = w.ncols();
        general_mat_mul(1.0, &w.t(), &gv, 0.0, &mut view_mut(&mut hbar, prev_rows, cols));
        activation_backward(tape, k - 2, plan, &hbar[..prev_rows * cols], &mut g[..prev_rows * cols]);
    }
    tape.g = g;
    tape.hbar = hbar;
}

/// Output jets of a batch of points.
#[derive(Clone, Debug)]
pub struct JetBatch {
    plan: JetPlan,
    len: usize,
    /// Row-major `len x components`.
    data: Vec<f64>,
}

impl JetBatch {
    /// Wraps row-major `len x components` data.
    pub fn from_components(plan: JetPlan, data: Vec<f64>) -> Result<Self> {
        let nc = plan.components();
        if data.len() % nc != 0 {
            return Err(PinnError::Contract("jet data length is not a multiple of the component count".into()));
        }
        Ok(Self { len: data.len() / nc, plan, data })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn plan(&self) -> &JetPlan {
        &self.plan
    }

    /// All components of point `p` in plan layout.
    pub fn components(&self, p: usize) -> &[f64] {
        let nc = self.plan.components();
        &self.data[p * nc..(p + 1) * nc]
    }

    pub fn value(&self, p: usize) -> f64 {
        self.components(p)[0]
    }

    pub fn first(&self, p: usize, axis: usize) -> Option<f64> {
        self.plan.first_index(axis).map(|c| self.components(p)[c])
    }

    pub fn second(&self, p: usize, axis: usize) -> Option<f64> {
        self.plan.second_index(axis).map(|c| self.components(p)[c])
    }

    /// Residual-facing view; missing components are reported as 0.
    pub fn jet(&self, p: usize) -> Jet {
        let dim = self.plan.dim;
        let t = dim - 1;
        Jet {
            value: self.value(p),
            dt: self.first(p, t).unwrap_or(0.0),
            dtt: self.second(p, t).unwrap_or(0.0),
            grad_x: (0..t).map(|i| self.first(p, i).unwrap_or(0.0)).collect(),
            laplacian: (0..t).map(|i| self.second(p, i).unwrap_or(0.0)).sum(),
        }
    }
}

/// Any space-time function whose jets can be evaluated: networks and exact solutions.
pub trait JetField {
    fn input_dim(&self) -> usize;
    fn jets(&self, points: &[f64], plan: &JetPlan) -> Result<JetBatch>;
}

impl JetField for MlpParams {
    fn input_dim(&self) -> usize {
        self.architecture().input_dim()
    }

    fn jets(&self, points: &[f64], plan: &JetPlan) -> Result<JetBatch> {
        eval_jets(self, points, plan)
    }
}

/// Evaluates the requested jets at a flat buffer of points (`dim` coordinates each).
pub fn eval_jets(params: &MlpParams, points: &[f64], plan: &JetPlan) -> Result<JetBatch> {
    let n = check_points(params, points, plan)?;
    let nc = plan.components();
    let dim = plan.dim;
    let mut data = Vec::with_capacity(n * nc);
    let mut tape = Tape::new(params, plan);
    for block in points.chunks(CHUNK * dim) {
        forward_block(params, block, plan, &mut tape);
        for p in 0..tape.batch {
            for c in 0..nc {
                data.push(tape.component(c, p));
            }
        }
    }
    Ok(JetBatch { plan: plan.clone(), len: n, data })
}

/// Value, `u_t`, `u_tt`, `∇_x u` and `Δu` at one point.
pub fn eval_jet(params: &MlpParams, point: &[f64]) -> Result<Jet> {
    let dim = params.architecture().input_dim();
    if point.len() != dim {
        return Err(PinnError::Contract(format!(
            "point has dimension {}, network expects {dim}",
            point.len()
        )));
    }
    Ok(eval_jets(params, point, &JetPlan::full(dim))?.jet(0))
}

/// Sum over points of a loss built from output jets, and its gradient.
///
/// `loss(p, point, components, adjoint)` returns the contribution of point
/// `p` and writes `∂contribution/∂component` into `adjoint`. The gradient is
/// accumulated into `grad`. Blocks are reduced in order, so the result is
/// independent of how the call is scheduled.
pub fn jet_loss_and_grad<F>(params: &MlpParams, points: &[f64], plan: &JetPlan, mut loss: F, grad: &mut [f64]) -> Result<f64>
where
    F: FnMut(usize, &[f64], &[f64], &mut [f64]) -> Result<f64>,
{
    check_points(params, points, plan)?;
    if grad.len() != params.architecture().num_params() {
        return Err(PinnError::Contract("gradient buffer has wrong length".into()));
    }
    let dim = plan.dim;
    let nc = plan.components();
    let mut total = 0.0;
    let mut comps = vec![0.0; nc];
    let mut adj = vec![0.0; nc];
    let mut tape = Tape::new(params, plan);
    for (b, block) in points.chunks(CHUNK * dim).enumerate() {
        forward_block(params, block, plan, &mut tape);
        let batch = tape.batch;
        let mut block_sum = 0.0;
        for p in 0..batch {
            for (c, v) in comps.iter_mut().enumerate() {
                *v = tape.component(c, p);
            }
            adj.iter_mut().for_each(|a| *a = 0.0);
            let idx = b * CHUNK + p;
            block_sum += loss(idx, &block[p * dim..(p + 1) * dim], &comps, &mut adj)?;
            for (c, a) in adj.iter().enumerate() {
                tape.g[c * batch + p] = *a;
            }
        }
        total += block_sum;
        backward_block(params, &mut tape, plan, grad);
    }
    Ok(total)
}

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub errors: Vec<(String, f64)>,
    pub h: f64,
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// Compares [`eval_jet`] with central differences of the forward map at `point`.
pub fn fd_check_jet(params: &MlpParams, point: &[f64], h: f64) -> Result<GradCheckReport> {
    if !(h > 0.0) {
        return Err(PinnError::Contract("finite-difference step must be positive".into()));
    }
    let jet = eval_jet(params, point)?;
    let dim = point.len();
    let f = |z: &[f64]| params.forward(z);
    let f0 = f(point)?;
    let mut shifted = point.to_vec();
    let mut diff = |axis: usize| -> Result<(f64, f64)> {
        shifted[axis] = point[axis] + h;
        let fp = f(&shifted)?;
        shifted[axis] = point[axis] - h;
        let fm = f(&shifted)?;
        shifted[axis] = point[axis];
        Ok(((fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h)))
    };
    let t = dim - 1;
    let mut errors = vec![("value".to_string(), rel_err(jet.value, f0))];
    let (dt, dtt) = diff(t)?;
    errors.push(("dt".into(), rel_err(jet.dt, dt)));
    errors.push(("dtt".into(), rel_err(jet.dtt, dtt)));
    let mut lap = 0.0;
    for i in 0..t {
        let (d1, d2) = diff(i)?;
        errors.push((format!("dx{i}"), rel_err(jet.grad_x[i], d1)));
        lap += d2;
    }
    if t > 0 {
        errors.push(("laplacian".into(), rel_err(jet.laplacian, lap)));
    }
    Ok(report(errors, h))
}

/// Compares an analytic gradient of `objective` at `params` with central
/// differences on every parameter entry.
pub fn fd_check_gradient<F>(params: &MlpParams, analytic: &[f64], h: f64, mut objective: F) -> Result<GradCheckReport>
where
    F: FnMut(&MlpParams) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(PinnError::Contract("finite-difference step must be positive".into()));
    }
    if analytic.len() != params.as_slice().len() {
        return Err(PinnError::Contract("gradient length mismatch".into()));
    }
    let mut probe = params.clone();
    let mut errors = Vec::with_capacity(analytic.len());
    for (i, &g) in analytic.iter().enumerate() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let fp = objective(&probe)?;
        probe.as_mut_slice()[i] = orig - h;
        let fm = objective(&probe)?;
        probe.as_mut_slice()[i] = orig;
        errors.push((format!("theta[{i}]"), rel_err(g, (fp - fm) / (2.0 * h))));
    }
    Ok(report(errors, h))
}

fn report(errors: Vec<(String, f64)>, h: f64) -> GradCheckReport {
    let max_rel_error = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    GradCheckReport { max_rel_error, errors, h }
}
