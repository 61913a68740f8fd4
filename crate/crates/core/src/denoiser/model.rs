use std::f64::consts::TAU;

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::masks::AttentionMasks;
use super::nn::{self, AttnCache, NormCache};
use super::params::{Params, BOUNDARY_FEATURES};
use super::ModelConfig;
use crate::dataset::{bin_center, BubbleGraph};
use crate::diffusion::LayoutTensor;
use crate::geometry::{Boundary, RoomType};
use crate::{rng, Error, Result};

/// The noise-prediction transformer with its configuration and training step count.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    pub config: ModelConfig,
    pub params: Params,
    pub step: usize,
}

/// Per-axis coordinate-bin logits for the real slots of a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLogits {
    pub bins: usize,
    /// Slot index of each row.
    pub slots: Vec<usize>,
    /// `slots.len() × 2·bins`; x logits first, then y.
    pub values: Array2<f64>,
}

impl DiscreteLogits {
    pub fn argmax(&self, row: usize) -> [usize; 2] {
        let r = self.values.row(row);
        let pick = |lo: usize| {
            let mut best = lo;
            for j in lo..lo + self.bins {
                if r[j] > r[best] {
                    best = j;
                }
            }
            best - lo
        };
        [pick(0), pick(self.bins)]
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub eps: LayoutTensor,
    pub logits: DiscreteLogits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub ce: f64,
}

/// Everything a forward pass needs besides the parameters.
pub(crate) struct Inputs<'a> {
    pub x_t: &'a LayoutTensor,
    pub t: usize,
    pub room_types: &'a [RoomType],
    pub boundary: Option<&'a Boundary>,
    pub masks: &'a AttentionMasks,
}

struct BlockTape {
    n1: NormCache,
    u: Array2<f64>,
    attn: [AttnCache; 4],
    n2: NormCache,
    v: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
}

struct RoundTape {
    norm: NormCache,
    attn: AttnCache,
}

pub(crate) struct Tape {
    feats: Array2<f64>,
    time_sin: Array2<f64>,
    time_pre: Array2<f64>,
    time_hidden: Array2<f64>,
    boundary_feats: Option<Array2<f64>>,
    rounds: Vec<RoundTape>,
    blocks: Vec<BlockTape>,
    nout: NormCache,
    out: Array2<f64>,
    mu: Option<Array2<f64>>,
}

pub(crate) struct Activations {
    pub slots: Vec<usize>,
    pub eps: Array2<f64>,
    pub logits: Option<Array2<f64>>,
    pub tape: Tape,
}

/// Sinusoidal features of a diffusion step: `[cos(t·f_i)..., sin(t·f_i)...]`.
pub fn timestep_features(t: usize, d: usize) -> Array2<f64> {
    let half = d / 2;
    let mut out = Array2::zeros((1, d));
    for i in 0..half {
        let freq = (-(10_000f64).ln() * i as f64 / half as f64).exp();
        out[[0, i]] = (t as f64 * freq).cos();
        out[[0, half + i]] = (t as f64 * freq).sin();
    }
    out
}

fn boundary_features(b: &Boundary) -> Array2<f64> {
    let c = b.polygon().corners();
    let m = c.len() as f64;
    Array2::from_shape_fn((c.len(), BOUNDARY_FEATURES), |(k, f)| {
        let phase = TAU * k as f64 / m;
        match f {
            0 => c[k].x,
            1 => c[k].y,
            2 => phase.cos(),
            3 => phase.sin(),
            4 => (2.0 * phase).cos(),
            _ => (2.0 * phase).sin(),
        }
    })
}

impl DenoiserModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate(None)?;
        let params = Params::init(&config, &mut rng::stream(seed, rng::STREAM_INIT));
        Ok(Self { config, params, step: 0 })
    }

    fn corner_features(&self, x_t: &LayoutTensor, room_types: &[RoomType], slots: &[usize]) -> Array2<f64> {
        let cfg = &self.config;
        let mut f = Array2::zeros((slots.len(), cfg.corner_features()));
        for (row, &s) in slots.iter().enumerate() {
            let (room, corner) = (x_t.room_of(s), x_t.corner_of(s));
            let [x, y] = x_t.get(s);
            f[[row, 0]] = x;
            f[[row, 1]] = y;
            if let Some(t) = room_types.get(room) {
                f[[row, 2 + t.index()]] = 1.0;
            }
            f[[row, 2 + RoomType::COUNT + room]] = 1.0;
            f[[row, 2 + RoomType::COUNT + cfg.max_rooms + corner]] = 1.0;
        }
        f
    }

    fn check_inputs(&self, inp: &Inputs) -> Result<()> {
        let cfg = &self.config;
        if inp.x_t.max_rooms() != cfg.max_rooms || inp.x_t.max_corners() != cfg.max_corners_per_room {
            return Err(Error::validation("layout tensor does not match the model's slot grid"));
        }
        if inp.masks.valid != inp.x_t.mask() {
            return Err(Error::validation("attention masks were built for different corner counts"));
        }
        if inp.room_types.len() != inp.x_t.num_rooms() {
            return Err(Error::validation(format!(
                "{} room types for {} rooms",
                inp.room_types.len(),
                inp.x_t.num_rooms()
            )));
        }
        if let Some(b) = inp.boundary {
            if b.polygon().len() < 3 {
                return Err(Error::validation("boundary needs at least 3 corners"));
            }
        }
        Ok(())
    }

    /// Per-slot input tokens for every slot of the grid, padded ones included.
    pub fn embed_inputs(&self, x_t: &LayoutTensor, t: usize, graph: &BubbleGraph) -> Result<Array2<f64>> {
        if graph.num_rooms() != x_t.num_rooms() {
            return Err(Error::validation("graph and layout disagree on room count"));
        }
        let slots: Vec<usize> = (0..x_t.num_slots()).collect();
        let feats = self.corner_features(x_t, graph.room_types(), &slots);
        let p = &self.params;
        let time_hidden = nn::silu(&nn::linear(&p.time_in, &timestep_features(t, self.config.d_model)));
        let temb = nn::linear(&p.time_out, &time_hidden);
        Ok(nn::linear(&p.corner_embed, &feats) + &temb)
    }

    /// Enriched boundary tokens (or the null token) used as cross-attention keys and values.
    fn encode_boundary(&self, boundary: Option<&Boundary>) -> (Array2<f64>, Option<Array2<f64>>, Vec<RoundTape>) {
        match boundary {
            None => (self.params.boundary.null_token.clone(), None, Vec::new()),
            Some(b) => self.encode_boundary_features(boundary_features(b)),
        }
    }

    fn encode_boundary_features(&self, feats: Array2<f64>) -> (Array2<f64>, Option<Array2<f64>>, Vec<RoundTape>) {
        let p = &self.params.boundary;
        let mut tokens = nn::linear(&p.embed, &feats);
        let mut tapes = Vec::with_capacity(p.rounds.len());
        for (norm, attn) in &p.rounds {
            let (normed, norm_cache) = nn::norm(norm, &tokens);
            let (delta, attn_cache) = nn::attention(attn, &normed, &normed, None, self.config.num_heads);
            tokens += &delta;
            tapes.push(RoundTape { norm: norm_cache, attn: attn_cache });
        }
        (tokens, Some(feats), tapes)
    }

    /// Boundary cross-attention of one block: `room_tokens` attend to the self-attended
    /// boundary corners, or to the learned null token when `boundary` is `None`.
    pub fn bca_forward(&self, block: usize, room_tokens: &Array2<f64>, boundary: Option<&Boundary>) -> Result<Array2<f64>> {
        let blk = self
            .params
            .blocks
            .get(block)
            .ok_or_else(|| Error::validation(format!("block {block} out of range")))?;
        let (kv, _, _) = self.encode_boundary(boundary);
        Ok(nn::attention(&blk.bca, room_tokens, &kv, None, self.config.num_heads).0)
    }

    fn sharpness(&self) -> f64 {
        self.params.discrete_sharpness[[0, 0]].exp()
    }

    /// Bin logits `-κ·(μ - c_j)²` for each axis readout `μ` and bin center `c_j`.
    fn bin_logits(&self, mu: &Array2<f64>) -> Array2<f64> {
        let bins = self.config.coord_bins;
        let kappa = self.sharpness();
        Array2::from_shape_fn((mu.nrows(), 2 * bins), |(r, j)| {
            let d = mu[[r, j / bins]] - bin_center(j % bins, bins);
            -kappa * d * d
        })
    }

    fn bin_logits_back(&self, mu: &Array2<f64>, dl: &Array2<f64>, g_sharp: &mut Array2<f64>) -> Array2<f64> {
        let bins = self.config.coord_bins;
        let kappa = self.sharpness();
        let mut d_mu = Array2::zeros(mu.raw_dim());
        let mut d_log_kappa = 0.0;
        for ((r, j), &g) in dl.indexed_iter() {
            let d = mu[[r, j / bins]] - bin_center(j % bins, bins);
            d_mu[[r, j / bins]] -= 2.0 * kappa * d * g;
            d_log_kappa -= kappa * d * d * g;
        }
        g_sharp[[0, 0]] += d_log_kappa;
        d_mu
    }

    pub(crate) fn run(&self, inp: &Inputs, need_logits: bool) -> Result<Activations> {
        self.check_inputs(inp)?;
        let cfg = &self.config;
        let p = &self.params;
        let heads = cfg.num_heads;
        let slots = inp.masks.real_slots();
        let csa = AttentionMasks::compact(&inp.masks.csa, &slots);
        let gsa = AttentionMasks::compact(&inp.masks.gsa, &slots);
        let rca = AttentionMasks::compact(&inp.masks.rca, &slots);

        let feats = self.corner_features(inp.x_t, inp.room_types, &slots);
        let time_sin = timestep_features(inp.t, cfg.d_model);
        let time_pre = nn::linear(&p.time_in, &time_sin);
        let time_hidden = nn::silu(&time_pre);
        let temb = nn::linear(&p.time_out, &time_hidden);
        let mut h = nn::linear(&p.corner_embed, &feats) + &temb;

        let (kv, boundary_feats, rounds) = self.encode_boundary(inp.boundary);

        let mut blocks = Vec::with_capacity(p.blocks.len());
        for blk in &p.blocks {
            let (u, n1) = nn::norm(&blk.norm1, &h);
            let (a_csa, c_csa) = nn::attention(&blk.csa, &u, &u, Some(&csa), heads);
            let (a_gsa, c_gsa) = nn::attention(&blk.gsa, &u, &u, Some(&gsa), heads);
            let (a_rca, c_rca) = nn::attention(&blk.rca, &u, &u, Some(&rca), heads);
            let (a_bca, c_bca) = nn::attention(&blk.bca, &u, &kv, None, heads);
            h = h + a_csa + a_gsa + a_rca + a_bca;
            let (v, n2) = nn::norm(&blk.norm2, &h);
            let ff_pre = nn::linear(&blk.ff_in, &v);
            let ff_act = nn::silu(&ff_pre);
            h = h + nn::linear(&blk.ff_out, &ff_act);
            blocks.push(BlockTape { n1, u, attn: [c_csa, c_gsa, c_rca, c_bca], n2, v, ff_pre, ff_act });
        }
        let (out, nout) = nn::norm(&p.norm_out, &h);
        let eps = nn::linear(&p.eps_head, &out);
        // the discrete head reads out a correction to the noisy coordinates
        let mu = need_logits.then(|| nn::linear(&p.discrete_head, &out) + gather(inp.x_t, &slots));
        let logits = mu.as_ref().map(|mu| self.bin_logits(mu));
        if !eps.iter().all(|v| v.is_finite()) || !logits.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::NumericFailure(format!("non-finite activations at step {}", inp.t)));
        }
        Ok(Activations {
            slots,
            eps,
            logits,
            tape: Tape { feats, time_sin, time_pre, time_hidden, boundary_feats, rounds, blocks, nout, out, mu },
        })
    }

    /// Gradient of a scalar loss given its derivatives at the two heads.
    pub(crate) fn backward(&self, tape: &Tape, d_eps: &Array2<f64>, d_logits: Option<&Array2<f64>>) -> Params {
        let p = &self.params;
        let heads = self.config.num_heads;
        let mut g = p.zeros_like();

        let mut dout = nn::linear_back(&p.eps_head, &tape.out, d_eps, &mut g.eps_head);
        if let (Some(dl), Some(mu)) = (d_logits, &tape.mu) {
            let d_mu = self.bin_logits_back(mu, dl, &mut g.discrete_sharpness);
            dout += &nn::linear_back(&p.discrete_head, &tape.out, &d_mu, &mut g.discrete_head);
        }
        let mut dh = nn::norm_back(&p.norm_out, &tape.nout, &dout, &mut g.norm_out);
        let mut dkv = Array2::zeros((0, 0));

        for (i, (blk, bt)) in p.blocks.iter().zip(&tape.blocks).enumerate().rev() {
            let gb = &mut g.blocks[i];
            let dact = nn::linear_back(&blk.ff_out, &bt.ff_act, &dh, &mut gb.ff_out);
            let dpre = nn::silu_back(&bt.ff_pre, &dact);
            let dv = nn::linear_back(&blk.ff_in, &bt.v, &dpre, &mut gb.ff_in);
            dh += &nn::norm_back(&blk.norm2, &bt.n2, &dv, &mut gb.norm2);

            let mut du = Array2::zeros(bt.u.raw_dim());
            for (attn, cache, grad) in [
                (&blk.csa, &bt.attn[0], &mut gb.csa),
                (&blk.gsa, &bt.attn[1], &mut gb.gsa),
                (&blk.rca, &bt.attn[2], &mut gb.rca),
            ] {
                let (dq, dkv_self) = nn::attention_back(attn, cache, &dh, grad, heads);
                du += &dq;
                du += &dkv_self;
            }
            let (dq, dkv_b) = nn::attention_back(&blk.bca, &bt.attn[3], &dh, &mut gb.bca, heads);
            du += &dq;
            if dkv.is_empty() {
                dkv = dkv_b;
            } else {
                dkv += &dkv_b;
            }
            dh += &nn::norm_back(&blk.norm1, &bt.n1, &du, &mut gb.norm1);
        }

        let dtemb = dh.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dhidden = nn::linear_back(&p.time_out, &tape.time_hidden, &dtemb, &mut g.time_out);
        let dpre = nn::silu_back(&tape.time_pre, &dhidden);
        nn::linear_back(&p.time_in, &tape.time_sin, &dpre, &mut g.time_in);
        nn::linear_back(&p.corner_embed, &tape.feats, &dh, &mut g.corner_embed);

        if dkv.is_empty() {
            return g;
        }
        match &tape.boundary_feats {
            None => g.boundary.null_token += &dkv,
            Some(feats) => {
                let mut db = dkv;
                for (r, rt) in tape.rounds.iter().enumerate().rev() {
                    let (norm, attn) = &p.boundary.rounds[r];
                    let (gn, ga) = &mut g.boundary.rounds[r];
                    let (dq, dk) = nn::attention_back(attn, &rt.attn, &db, ga, heads);
                    let dnormed = dq + dk;
                    db += &nn::norm_back(norm, &rt.norm, &dnormed, gn);
                }
                nn::linear_back(&p.boundary.embed, feats, &db, &mut g.boundary.embed);
            }
        }
        g
    }

    /// Noise estimate and discrete logits for a noisy layout.
    pub fn forward(
        &self,
        x_t: &LayoutTensor,
        t: usize,
        graph: &BubbleGraph,
        boundary: Option<&Boundary>,
        masks: &AttentionMasks,
    ) -> Result<ForwardOutput> {
        let act = self.run(&Inputs { x_t, t, room_types: graph.room_types(), boundary, masks }, true)?;
        let logits = act.logits.expect("logits requested");
        Ok(ForwardOutput {
            eps: scatter(x_t, &act.slots, &act.eps),
            logits: DiscreteLogits { bins: self.config.coord_bins, slots: act.slots, values: logits },
        })
    }
}

/// Writes compact per-slot rows back into a tensor shaped like `like`.
pub(crate) fn scatter(like: &LayoutTensor, slots: &[usize], rows: &Array2<f64>) -> LayoutTensor {
    let mut out = like.zeroed();
    for (r, &s) in slots.iter().enumerate() {
        out.set(s, [rows[[r, 0]], rows[[r, 1]]]);
    }
    out
}

pub(crate) fn gather(t: &LayoutTensor, slots: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((slots.len(), 2));
    for (r, &s) in slots.iter().enumerate() {
        let [x, y] = t.get(s);
        out[[r, 0]] = x;
        out[[r, 1]] = y;
    }
    out
}

/// Training loss of one example: noise MSE over the real slots of `eps_hat` plus
/// `weight · [t ≤ threshold] ·` the per-axis cross-entropy of `logits` against the
/// quantized clean coordinates `x0_bins` (one entry per real slot, in slot order).
pub fn loss(
    eps_hat: &LayoutTensor,
    eps_true: &LayoutTensor,
    logits: &DiscreteLogits,
    x0_bins: &[[usize; 2]],
    t: usize,
    cfg: &ModelConfig,
    weight: f64,
) -> Result<LossParts> {
    if !eps_hat.same_shape(eps_true) {
        return Err(Error::validation("eps tensors have different shapes"));
    }
    let slots: Vec<usize> = eps_hat.real_slots().collect();
    if logits.slots != slots || x0_bins.len() != slots.len() || logits.values.ncols() != 2 * logits.bins {
        return Err(Error::validation("logits and targets must cover exactly the real slots"));
    }
    if x0_bins.iter().flatten().any(|&b| b >= logits.bins) {
        return Err(Error::validation("quantized target outside the bin range"));
    }
    let (parts, _, _) = loss_compact(
        &gather(eps_hat, &slots),
        &gather(eps_true, &slots),
        Some(&logits.values),
        x0_bins,
        t <= cfg.discrete_threshold,
        weight,
        logits.bins,
    );
    Ok(parts)
}

/// Noise MSE over real slots plus, at or below the discrete threshold, the weighted
/// per-axis cross-entropy of the coordinate-bin logits. Returns the loss and its
/// derivatives with respect to both heads.
pub(crate) fn loss_compact(
    eps_hat: &Array2<f64>,
    eps_true: &Array2<f64>,
    logits: Option<&Array2<f64>>,
    targets: &[[usize; 2]],
    gate: bool,
    weight: f64,
    bins: usize,
) -> (LossParts, Array2<f64>, Option<Array2<f64>>) {
    let count = eps_hat.len() as f64;
    let diff = eps_hat - eps_true;
    let mse = diff.iter().map(|v| v * v).sum::<f64>() / count;
    let d_eps = diff * (2.0 / count);
    let (Some(logits), true) = (logits, gate) else {
        return (LossParts { total: mse, mse, ce: 0.0 }, d_eps, None);
    };
    let terms = (2 * targets.len()) as f64;
    let mut ce = 0.0;
    let mut d_logits = Array2::zeros(logits.raw_dim());
    for (row, target) in targets.iter().enumerate() {
        for (axis, &bin) in target.iter().enumerate() {
            let seg = logits.slice(s![row, axis * bins..(axis + 1) * bins]);
            let max = seg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = seg.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + sum.ln();
            ce += log_z - seg[bin];
            let mut dseg = d_logits.slice_mut(s![row, axis * bins..(axis + 1) * bins]);
            for (j, d) in dseg.iter_mut().enumerate() {
                let pj = (seg[j] - log_z).exp();
                *d = weight * (pj - if j == bin { 1.0 } else { 0.0 }) / terms;
            }
        }
    }
    ce /= terms;
    (LossParts { total: mse + weight * ce, mse, ce }, d_eps, Some(d_logits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, Polygon};

    #[test]
    fn bca_is_invariant_to_cyclic_rotation_of_boundary_tokens() {
        let model = DenoiserModel::new(ModelConfig::default(), 5).unwrap();
        let poly = Polygon::new(vec![
            Point::new(-0.7, -0.6),
            Point::new(0.8, -0.7),
            Point::new(0.9, 0.2),
            Point::new(0.1, 0.8),
            Point::new(-0.8, 0.5),
        ])
        .unwrap();
        let feats = boundary_features(&Boundary::new(poly));
        let n = feats.nrows();
        let rotated = Array2::from_shape_fn(feats.raw_dim(), |(k, f)| feats[[(k + 2) % n, f]]);
        let rooms = Array2::from_shape_fn((6, model.config.d_model), |(i, j)| ((i * 7 + j) as f64).sin());
        let blk = &model.params.blocks[0].bca;
        let heads = model.config.num_heads;
        let a = nn::attention(blk, &rooms, &model.encode_boundary_features(feats).0, None, heads).0;
        let b = nn::attention(blk, &rooms, &model.encode_boundary_features(rotated).0, None, heads).0;
        assert!((a - b).iter().all(|v| v.abs() < 1e-12));
    }
}
