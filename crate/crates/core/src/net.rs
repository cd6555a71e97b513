//! Tanh feed-forward networks: architecture, parameters, forward evaluation,
//! and the architecture-only C^n / C^0 norm bounds used by the error bounds.
//!
//! Parameters live in one flat buffer ordered layer by layer, each layer as
//! its weight matrix (row-major, `out x in`) followed by its bias. The same
//! ordering is used for gradients and by the optimizer.

use std::f64::consts::E;
use std::sync::OnceLock;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PinnError, Result};

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

impl Activation {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
        }
    }

    /// `[σ, σ', σ'', σ''', σ'''']` at `x`.
    #[inline]
    pub fn derivatives(self, x: f64) -> [f64; 5] {
        match self {
            Activation::Tanh => {
                let s = x.tanh();
                let s1 = 1.0 - s * s;
                let s2 = -2.0 * s * s1;
                let s3 = -2.0 * s1 * s1 + 4.0 * s * s * s1;
                let s4 = -4.0 * s1 * s2 + 8.0 * s * s1 * s1 + 4.0 * s * s * s2;
                [s, s1, s2, s3, s4]
            }
        }
    }
}

/// Layer widths `l_0..l_L`, weight bound `R` and activation.
///
/// `weight_bound = None` stands for `R = ∞` (unconstrained training).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub widths: Vec<usize>,
    #[serde(default)]
    pub weight_bound: Option<f64>,
    #[serde(default)]
    pub activation: Activation,
}

impl Architecture {
    pub fn new(widths: Vec<usize>, weight_bound: Option<f64>) -> Result<Self> {
        let arch = Self {
            widths,
            weight_bound,
            activation: Activation::Tanh,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// `d+1` inputs, the given hidden widths, one output.
    pub fn for_problem(spatial_dim: usize, hidden: &[usize], weight_bound: Option<f64>) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(spatial_dim + 1);
        widths.extend_from_slice(hidden);
        widths.push(1);
        Self::new(widths, weight_bound)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 3 {
            return Err(PinnError::Config(format!(
                "need at least one hidden layer (L >= 2), got widths {:?}",
                self.widths
            )));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(PinnError::Config(format!("zero width in {:?}", self.widths)));
        }
        if *self.widths.last().unwrap() != 1 {
            return Err(PinnError::Config("output width must be 1".into()));
        }
        if let Some(r) = self.weight_bound {
            if !(r >= 0.0) || r.is_infinite() {
                return Err(PinnError::Config(format!("weight bound must be finite and >= 0, got {r}")));
            }
        }
        Ok(())
    }

    /// Number of affine layers `L`.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    /// `W = max(l_0, ..., l_L)`.
    pub fn max_width(&self) -> usize {
        *self.widths.iter().max().unwrap()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn spatial_dim(&self) -> usize {
        self.widths[0] - 1
    }

    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Offsets of `(weights, bias)` for layer `k` (1-based).
    pub(crate) fn layer_offsets(&self, k: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.widths.windows(2).take(k - 1) {
            off += w[1] * w[0] + w[1];
        }
        let (fan_in, fan_out) = (self.widths[k - 1], self.widths[k]);
        (off, off + fan_out * fan_in)
    }

    fn finite_bound(&self) -> Result<f64> {
        self.weight_bound
            .ok_or_else(|| PinnError::BoundUnavailable("weight bound R is infinite".into()))
    }
}

/// Sup norms of the activation and its derivatives up to order `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationNormTable {
    pub n: usize,
    pub sup_norms: Vec<f64>,
    pub cn_norm: f64,
}

static TANH_SUP: OnceLock<[f64; 5]> = OnceLock::new();

fn tanh_sup_table() -> [f64; 5] {
    *TANH_SUP.get_or_init(|| {
        // Derivatives of tanh decay like e^{-2|x|}; the scan over [-20, 20]
        // plus the limits at ±∞ (|σ| -> 1, derivatives -> 0) covers the sup.
        let mut sup: [f64; 5] = [1.0, 0.0, 0.0, 0.0, 0.0];
        let steps = 4_000_000;
        let h = 40.0 / steps as f64;
        for i in 0..=steps {
            let x = -20.0 + i as f64 * h;
            let d = Activation::Tanh.derivatives(x);
            for (s, v) in sup.iter_mut().zip(d) {
                *s = s.max(v.abs());
            }
        }
        sup
    })
}

impl ActivationNormTable {
    pub fn for_activation(act: Activation, n: usize) -> Result<Self> {
        if n > 4 {
            return Err(PinnError::Unsupported(format!("activation norms above order 4 (asked {n})")));
        }
        let table = match act {
            Activation::Tanh => tanh_sup_table(),
        };
        let sup_norms = table[..=n].to_vec();
        let cn_norm = sup_norms.iter().cloned().fold(0.0, f64::max);
        Ok(Self { n, sup_norms, cn_norm })
    }

    pub fn tanh(n: usize) -> Result<Self> {
        Self::for_activation(Activation::Tanh, n)
    }
}

/// Network parameters `θ = (W_k, b_k)_{k=1..L}` in a flat buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamsFile", try_from = "ParamsFile")]
pub struct MlpParams {
    arch: Architecture,
    data: Vec<f64>,
}

/// Weight initialization scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitScheme {
    /// Uniform on `[-s, s]` with `s = min(R, 1/sqrt(fan_in))`.
    UniformFanIn,
    /// Uniform on `[-s, s]` with `s = min(R, scale)`.
    SmallUniform { scale: f64 },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::UniformFanIn
    }
}

impl MlpParams {
    pub fn zeros(arch: Architecture) -> Self {
        let n = arch.num_params();
        Self { arch, data: vec![0.0; n] }
    }

    pub fn from_flat(arch: Architecture, data: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if data.len() != arch.num_params() {
            return Err(PinnError::Contract(format!(
                "expected {} parameters, got {}",
                arch.num_params(),
                data.len()
            )));
        }
        Ok(Self { arch, data })
    }

    /// Deterministic initialization from `seed`.
    pub fn init(arch: &Architecture, seed: u64, scheme: InitScheme) -> Result<Self> {
        arch.validate()?;
        let r = arch.weight_bound.unwrap_or(f64::INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(arch.num_params());
        for w in arch.widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let s = match scheme {
                InitScheme::UniformFanIn => (1.0 / (fan_in as f64).sqrt()).min(r),
                InitScheme::SmallUniform { scale } => {
                    if !(scale >= 0.0) {
                        return Err(PinnError::Config(format!("init scale must be >= 0, got {scale}")));
                    }
                    scale.min(r)
                }
            };
            for _ in 0..fan_out * (fan_in + 1) {
                let u: f64 = rng.gen();
                data.push((2.0 * u - 1.0) * s);
            }
        }
        Ok(Self { arch: arch.clone(), data })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    /// Weight matrix of layer `k` (1-based), shape `l_k x l_{k-1}`.
    pub fn weights(&self, k: usize) -> ArrayView2<'_, f64> {
        let (w_off, b_off) = self.arch.layer_offsets(k);
        let shape = (self.arch.widths[k], self.arch.widths[k - 1]);
        ArrayView2::from_shape(shape, &self.data[w_off..b_off]).expect("layer shape")
    }

    pub fn bias(&self, k: usize) -> ArrayView1<'_, f64> {
        let (_, b_off) = self.arch.layer_offsets(k);
        ArrayView1::from(&self.data[b_off..b_off + self.arch.widths[k]])
    }

    /// Largest parameter magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Network value at one space-time point `(x_1, .., x_d, t)`.
    pub fn forward(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.arch.input_dim() {
            return Err(PinnError::Contract(format!(
                "point has dimension {}, network expects {}",
                point.len(),
                self.arch.input_dim()
            )));
        }
        let act = self.arch.activation;
        let depth = self.arch.depth();
        let mut h = point.to_vec();
        for k in 1..=depth {
            let w = self.weights(k);
            let b = self.bias(k);
            let mut next: Vec<f64> = w.dot(&ArrayView1::from(&h[..])).into_iter().zip(b).map(|(a, b)| a + b).collect();
            if k < depth {
                next.iter_mut().for_each(|v| *v = act.eval(*v));
            }
            h = next;
        }
        Ok(h[0])
    }

    /// Same parameters with every entry clipped into `[-R, R]` for the
    /// architecture's bound `R`; returns a copy with `R` updated.
    pub fn with_weight_bound(&self, r: f64) -> Result<Self> {
        let mut arch = self.arch.clone();
        arch.weight_bound = Some(r);
        arch.validate()?;
        if self.max_abs() > r {
            return Err(PinnError::Contract(format!(
                "parameters exceed requested bound R = {r} (max |entry| = {})",
                self.max_abs()
            )));
        }
        Ok(Self { arch, data: self.data.clone() })
    }

    /// Default finite `R` for bound computation: max |entry| rounded up to
    /// the next integer (at least 1).
    pub fn observed_weight_bound(&self) -> f64 {
        self.max_abs().ceil().max(1.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ParamsFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ParamsFile = serde_json::from_str(s)?;
        file.try_into()
    }
}

/// Splits a flat gradient buffer into per-layer views, mirroring
/// [`MlpParams::weights`] / [`MlpParams::bias`].
pub(crate) fn layer_views_mut<'a>(
    arch: &Architecture,
    k: usize,
    buf: &'a mut [f64],
) -> (ArrayViewMut2<'a, f64>, ArrayViewMut1<'a, f64>) {
    let (w_off, b_off) = arch.layer_offsets(k);
    let (fan_out, fan_in) = (arch.widths[k], arch.widths[k - 1]);
    let (w, rest) = buf[w_off..b_off + fan_out].split_at_mut(b_off - w_off);
    (
        ArrayViewMut2::from_shape((fan_out, fan_in), w).expect("layer shape"),
        ArrayViewMut1::from(rest),
    )
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// On-disk parameter format:
/// `{"architecture": {...}, "layers": [{"weights": [row-major], "bias": [...]}]}`.
#[derive(Serialize, Deserialize)]
struct ParamsFile {
    architecture: Architecture,
    layers: Vec<LayerFile>,
}

impl From<&MlpParams> for ParamsFile {
    fn from(p: &MlpParams) -> Self {
        let layers = (1..=p.arch.depth())
            .map(|k| LayerFile {
                weights: p.weights(k).iter().cloned().collect(),
                bias: p.bias(k).to_vec(),
            })
            .collect();
        Self {
            architecture: p.arch.clone(),
            layers,
        }
    }
}

impl From<MlpParams> for ParamsFile {
    fn from(p: MlpParams) -> Self {
        ParamsFile::from(&p)
    }
}

impl TryFrom<ParamsFile> for MlpParams {
    type Error = PinnError;

    fn try_from(f: ParamsFile) -> Result<Self> {
        f.architecture.validate()?;
        if f.layers.len() != f.architecture.depth() {
            return Err(PinnError::Config(format!(
                "architecture has {} layers, file has {}",
                f.architecture.depth(),
                f.layers.len()
            )));
        }
        let mut data = Vec::with_capacity(f.architecture.num_params());
        for (k, layer) in f.layers.into_iter().enumerate() {
            let (fan_in, fan_out) = (f.architecture.widths[k], f.architecture.widths[k + 1]);
            if layer.weights.len() != fan_in * fan_out || layer.bias.len() != fan_out {
                return Err(PinnError::Config(format!("layer {} has wrong shape", k + 1)));
            }
            data.extend(layer.weights);
            data.extend(layer.bias);
        }
        MlpParams::from_flat(f.architecture, data)
    }
}

/// The hypothesis class `Θ_{L,W,R}`: depth, max width and weight bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkClass {
    pub depth: usize,
    pub width: usize,
    pub weight_bound: f64,
}

impl NetworkClass {
    pub fn of(arch: &Architecture) -> Result<Self> {
        Ok(Self {
            depth: arch.depth(),
            width: arch.max_width(),
            weight_bound: arch.finite_bound()?,
        })
    }

    /// Base-10 logarithm of `16^L (d+1)^{2n} (e² n⁴ W³ R^n ‖σ‖_{C^n})^{nL}`.
    pub fn log10_cn_bound(&self, d: usize, n: usize, act: &ActivationNormTable) -> Result<f64> {
        self.check(act, n)?;
        if n == 0 {
            return Err(PinnError::Contract("C^n bound requires n >= 1".into()));
        }
        let l = self.depth as f64;
        let n_f = n as f64;
        let base = E * E * n_f.powi(4) * (self.width as f64).powi(3) * self.weight_bound.powi(n as i32) * act.cn_norm;
        Ok(l * 16f64.log10() + 2.0 * n_f * ((d + 1) as f64).log10() + n_f * l * base.log10())
    }

    pub fn cn_bound(&self, d: usize, n: usize, act: &ActivationNormTable) -> Result<f64> {
        Ok(10f64.powf(self.log10_cn_bound(d, n, act)?))
    }

    /// `R (W ‖σ‖_{C^0} + 1)`.
    pub fn c0_bound(&self, act: &ActivationNormTable) -> Result<f64> {
        self.check(act, 0)?;
        Ok(self.weight_bound * (self.width as f64 * act.sup_norms[0] + 1.0))
    }

    fn check(&self, act: &ActivationNormTable, n: usize) -> Result<()> {
        if self.depth < 2 {
            return Err(PinnError::Contract("norm bounds require L >= 2".into()));
        }
        if self.width < 1 {
            return Err(PinnError::Contract("norm bounds require W >= 1".into()));
        }
        if !self.weight_bound.is_finite() || self.weight_bound < 0.0 {
            return Err(PinnError::BoundUnavailable(format!("weight bound R = {}", self.weight_bound)));
        }
        if act.n < n {
            return Err(PinnError::Contract(format!("activation table has order {}, need {n}", act.n)));
        }
        if act.cn_norm < 1.0 {
            return Err(PinnError::Contract("activation norm must be >= 1".into()));
        }
        Ok(())
    }
}

/// `‖u_θ‖_{C^n} <= 16^L (d+1)^{2n} (e² n⁴ W³ R^n ‖σ‖_{C^n})^{nL}`.
pub fn cn_norm_bound(arch: &Architecture, d: usize, n: usize, act: &ActivationNormTable) -> Result<f64> {
    NetworkClass::of(arch)?.cn_bound(d, n, act)
}

/// Base-10 logarithm of [`cn_norm_bound`]; stays finite where the bound
/// itself overflows `f64`.
pub fn log10_cn_norm_bound(arch: &Architecture, d: usize, n: usize, act: &ActivationNormTable) -> Result<f64> {
    NetworkClass::of(arch)?.log10_cn_bound(d, n, act)
}

/// `‖u_θ‖_{C^0} <= R (W ‖σ‖_{C^0} + 1)`.
pub fn c0_norm_bound(arch: &Architecture, act: &ActivationNormTable) -> Result<f64> {
    NetworkClass::of(arch)?.c0_bound(act)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_net() -> MlpParams {
        let arch = Architecture::new(vec![1, 1, 1], None).unwrap();
        MlpParams::from_flat(arch, vec![1.0, 0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn zero_scale_init_is_zero() {
        let arch = Architecture::new(vec![1, 1, 1], None).unwrap();
        let p = MlpParams::init(&arch, 7, InitScheme::SmallUniform { scale: 0.0 }).unwrap();
        assert!(p.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let arch = Architecture::new(vec![3, 16, 16, 1], Some(0.1)).unwrap();
        let a = MlpParams::init(&arch, 42, InitScheme::UniformFanIn).unwrap();
        let b = MlpParams::init(&arch, 42, InitScheme::UniformFanIn).unwrap();
        assert_eq!(a, b);
        assert!(a.max_abs() <= 0.1);
        let c = MlpParams::init(&arch, 43, InitScheme::UniformFanIn).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_widths_rejected() {
        assert!(Architecture::new(vec![3, 1], None).is_err());
        assert!(Architecture::new(vec![0, 4, 1], None).is_err());
        assert!(Architecture::new(vec![3, 0, 1], None).is_err());
        assert!(Architecture::new(vec![3, 4, 2], None).is_err());
    }

    #[test]
    fn forward_identity_net() {
        let p = identity_net();
        assert_eq!(p.forward(&[0.0]).unwrap(), 0.0);
        assert_relative_eq!(p.forward(&[0.5]).unwrap(), 0.46211715726000974, epsilon = 1e-12);
        assert!(p.forward(&[0.5, 0.1]).is_err());
    }

    #[test]
    fn forward_zero_net() {
        let arch = Architecture::new(vec![3, 5, 5, 1], None).unwrap();
        let p = MlpParams::zeros(arch);
        assert_eq!(p.forward(&[0.2, -0.1, 0.4]).unwrap(), 0.0);
    }

    #[test]
    fn cn_bound_closed_form() {
        let act = ActivationNormTable { n: 1, sup_norms: vec![1.0, 1.0], cn_norm: 1.0 };
        let class = NetworkClass { depth: 2, width: 1, weight_bound: 1.0 };
        // 16² · 2² · (e²)² = 1024 e⁴
        assert_relative_eq!(class.cn_bound(1, 1, &act).unwrap(), 1024.0 * E.powi(4), max_relative = 1e-12);
        let arch = Architecture::new(vec![2, 1, 1], Some(1.0)).unwrap();
        let got = cn_norm_bound(&arch, 1, 1, &act).unwrap();
        assert_relative_eq!(got, 256.0 * 4.0 * (E * E * 8.0).powi(2), max_relative = 1e-12);
    }

    #[test]
    fn cn_bound_requires_finite_r() {
        let arch = Architecture::new(vec![2, 4, 1], None).unwrap();
        let act = ActivationNormTable::tanh(1).unwrap();
        assert!(matches!(cn_norm_bound(&arch, 1, 1, &act), Err(PinnError::BoundUnavailable(_))));
        assert!(matches!(c0_norm_bound(&arch, &act), Err(PinnError::BoundUnavailable(_))));
    }

    #[test]
    fn doubling_r_scales_by_two_to_the_nl() {
        let act = ActivationNormTable::tanh(1).unwrap();
        let a1 = Architecture::new(vec![3, 4, 4, 1], Some(1.5)).unwrap();
        let a2 = Architecture::new(vec![3, 4, 4, 1], Some(3.0)).unwrap();
        let ratio = cn_norm_bound(&a2, 2, 1, &act).unwrap() / cn_norm_bound(&a1, 2, 1, &act).unwrap();
        assert_relative_eq!(ratio, 2f64.powi(3), max_relative = 1e-10);
    }

    #[test]
    fn c0_bound_examples() {
        let act = ActivationNormTable { n: 0, sup_norms: vec![1.0], cn_norm: 1.0 };
        let class = |width, weight_bound| NetworkClass { depth: 2, width, weight_bound };
        assert_relative_eq!(class(1, 1.0).c0_bound(&act).unwrap(), 2.0);
        assert_relative_eq!(class(3, 2.0).c0_bound(&act).unwrap(), 8.0);
        assert_eq!(class(3, 0.0).c0_bound(&act).unwrap(), 0.0);
        // W counts the input layer too.
        let arch = Architecture::new(vec![2, 1, 1], Some(1.0)).unwrap();
        assert_relative_eq!(c0_norm_bound(&arch, &act).unwrap(), 3.0);
    }

    #[test]
    fn tanh_norm_table() {
        let t = ActivationNormTable::tanh(4).unwrap();
        assert_relative_eq!(t.sup_norms[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(t.sup_norms[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(t.sup_norms[2], 4.0 / (3.0 * 3f64.sqrt()), epsilon = 1e-6);
        assert_relative_eq!(t.sup_norms[3], 2.0, epsilon = 1e-9);
        assert_eq!(ActivationNormTable::tanh(1).unwrap().cn_norm, 1.0);
    }

    #[test]
    fn json_round_trip() {
        let arch = Architecture::new(vec![3, 4, 2, 1], Some(2.0)).unwrap();
        let p = MlpParams::init(&arch, 1, InitScheme::UniformFanIn).unwrap();
        let s = p.to_json().unwrap();
        assert!(s.contains("\"layers\""));
        assert_eq!(MlpParams::from_json(&s).unwrap(), p);
    }
}
