use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::ModelConfig;

/// Affine map `y = x·w + b`, `w: in × out`, `b: 1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

/// Row-wise layer normalization with learned gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Norm {
    pub gain: Array2<f64>,
    pub bias: Array2<f64>,
}

/// Bias-free multi-head attention projections, all `d × d`.
///
/// Without biases a query row that may attend to nothing outputs exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub norm1: Norm,
    pub csa: Attention,
    pub gsa: Attention,
    pub rca: Attention,
    pub bca: Attention,
    pub norm2: Norm,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEncoder {
    pub embed: Linear,
    pub rounds: Vec<(Norm, Attention)>,
    /// Stand-in key/value token when the boundary is dropped or absent.
    pub null_token: Array2<f64>,
}

/// Every trainable tensor of the denoiser. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub corner_embed: Linear,
    pub time_in: Linear,
    pub time_out: Linear,
    pub boundary: BoundaryEncoder,
    pub blocks: Vec<Block>,
    pub norm_out: Norm,
    pub eps_head: Linear,
    /// Per-axis correction `μ - x_t` read out by the discrete head, `d × 2`.
    pub discrete_head: Linear,
    /// Log sharpness of the discrete head's bin logits, `1 × 1`.
    pub discrete_sharpness: Array2<f64>,
}

/// Boundary corner features: xy plus two harmonics of the corner's position along the loop.
pub const BOUNDARY_FEATURES: usize = 6;

/// Starting value of the discrete head's sharpness `κ` (bin logits are `-κ·(μ - c)²`).
pub const INITIAL_SHARPNESS: f64 = 200.0;

macro_rules! visitors {
    ($($ty:ident { $($field:ident),* })*) => {
        $(impl $ty {
            fn push<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<f64>)>) {
                $(out.push((format!("{prefix}{}", stringify!($field)), &self.$field));)*
            }
            fn push_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Array2<f64>)>) {
                $(out.push((format!("{prefix}{}", stringify!($field)), &mut self.$field));)*
            }
        })*
    };
}

visitors! {
    Linear { w, b }
    Norm { gain, bias }
    Attention { wq, wk, wv, wo }
}

macro_rules! walk {
    ($self:ident, $out:ident, $push:ident, $iter:ident $(, $m:tt)?) => {{
        $self.corner_embed.$push("corner_embed.", &mut $out);
        $self.time_in.$push("time_in.", &mut $out);
        $self.time_out.$push("time_out.", &mut $out);
        $self.boundary.embed.$push("boundary.embed.", &mut $out);
        for (i, (norm, attn)) in $self.boundary.rounds.$iter().enumerate() {
            norm.$push(&format!("boundary.round{i}.norm."), &mut $out);
            attn.$push(&format!("boundary.round{i}.attn."), &mut $out);
        }
        $out.push(("boundary.null_token".to_string(), & $($m)? $self.boundary.null_token));
        for (i, b) in $self.blocks.$iter().enumerate() {
            let p = format!("blocks.{i}.");
            b.norm1.$push(&format!("{p}norm1."), &mut $out);
            b.csa.$push(&format!("{p}csa."), &mut $out);
            b.gsa.$push(&format!("{p}gsa."), &mut $out);
            b.rca.$push(&format!("{p}rca."), &mut $out);
            b.bca.$push(&format!("{p}bca."), &mut $out);
            b.norm2.$push(&format!("{p}norm2."), &mut $out);
            b.ff_in.$push(&format!("{p}ff_in."), &mut $out);
            b.ff_out.$push(&format!("{p}ff_out."), &mut $out);
        }
        $self.norm_out.$push("norm_out.", &mut $out);
        $self.eps_head.$push("eps_head.", &mut $out);
        $self.discrete_head.$push("discrete_head.", &mut $out);
        $out.push(("discrete_sharpness".to_string(), & $($m)? $self.discrete_sharpness));
    }};
}

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = rng.sample(StandardNormal);
        z * std
    })
}

impl Linear {
    fn init(rng: &mut impl Rng, fan_in: usize, fan_out: usize, gain: f64) -> Self {
        Self {
            w: gaussian(rng, fan_in, fan_out, gain / (fan_in as f64).sqrt()),
            b: Array2::zeros((1, fan_out)),
        }
    }
}

impl Norm {
    fn init(d: usize) -> Self {
        Self { gain: Array2::ones((1, d)), bias: Array2::zeros((1, d)) }
    }
}

impl Attention {
    fn init(rng: &mut impl Rng, d: usize, out_gain: f64) -> Self {
        let s = 1.0 / (d as f64).sqrt();
        Self {
            wq: gaussian(rng, d, d, s),
            wk: gaussian(rng, d, d, s),
            wv: gaussian(rng, d, d, s),
            wo: gaussian(rng, d, d, s * out_gain),
        }
    }
}

impl Params {
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.d_model;
        // residual branches start small so the stack begins close to the identity
        let branch = 0.5 / (cfg.num_blocks.max(1) as f64).sqrt();
        let mut p = Params {
            corner_embed: Linear::init(rng, cfg.corner_features(), d, 1.0),
            time_in: Linear::init(rng, d, d, 1.0),
            time_out: Linear::init(rng, d, d, 1.0),
            boundary: BoundaryEncoder {
                embed: Linear::init(rng, BOUNDARY_FEATURES, d, 1.0),
                rounds: (0..cfg.boundary_rounds)
                    .map(|_| (Norm::init(d), Attention::init(rng, d, branch)))
                    .collect(),
                null_token: gaussian(rng, 1, d, 1.0),
            },
            blocks: (0..cfg.num_blocks)
                .map(|_| Block {
                    norm1: Norm::init(d),
                    csa: Attention::init(rng, d, branch),
                    gsa: Attention::init(rng, d, branch),
                    rca: Attention::init(rng, d, branch),
                    bca: Attention::init(rng, d, branch),
                    norm2: Norm::init(d),
                    ff_in: Linear::init(rng, d, cfg.ff_width, 1.0),
                    ff_out: Linear::init(rng, cfg.ff_width, d, branch),
                })
                .collect(),
            norm_out: Norm::init(d),
            eps_head: Linear::init(rng, d, 2, 1.0),
            discrete_head: Linear::init(rng, d, 2, 0.1),
            discrete_sharpness: Array2::from_elem((1, 1), INITIAL_SHARPNESS.ln()),
        };
        p.round_to_f32();
        p
    }

    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::new();
        walk!(self, out, push, iter);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = Vec::new();
        walk!(self, out, push_mut, iter_mut, mut);
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Params) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            t.mapv_inplace(|v| v * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Checkpoints store 32-bit floats; keeping parameters on that grid makes save/load exact.
    pub fn round_to_f32(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.mapv_inplace(|v| v as f32 as f64);
        }
    }
}
