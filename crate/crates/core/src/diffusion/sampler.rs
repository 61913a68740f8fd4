use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::process::check_lambda;
use super::{LayoutTensor, NoiseSchedule};
use crate::dataset::{bin_center, sample_corner_counts, BubbleGraph, CornerHistogram};
use crate::denoiser::model::{gather, Inputs};
use crate::denoiser::{build_masks, DenoiserModel, DiscreteLogits};
use crate::geometry::{Boundary, Floorplan};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRequest {
    pub graph: BubbleGraph,
    pub boundary: Option<Boundary>,
    pub lambda: f64,
    pub num_samples: usize,
    pub seed: u64,
    /// Explicit per-room corner counts; drawn from a histogram per sample when absent.
    pub corner_counts: Option<Vec<usize>>,
}

impl SampleRequest {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.num_samples == 0 {
            return Err(Error::validation("num_samples must be at least 1"));
        }
        if let Some(c) = &self.corner_counts {
            if c.len() != self.graph.num_rooms() {
                return Err(Error::validation(format!(
                    "corner_counts has {} entries for {} rooms",
                    c.len(),
                    self.graph.num_rooms()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerOptions {
    /// Visit every `stride`-th timestep; 1 runs the full chain.
    pub stride: usize,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

/// Draws `req.num_samples` plans; sample `i` uses seed `req.seed + i`.
pub fn sample(
    model: &DenoiserModel,
    req: &SampleRequest,
    sched: &NoiseSchedule,
    hist: Option<&CornerHistogram>,
    opts: SamplerOptions,
) -> Result<Vec<Floorplan>> {
    req.validate()?;
    (0..req.num_samples)
        .into_par_iter()
        .map(|i| sample_one(model, req, sched, hist, opts, i))
        .collect()
}

fn timesteps(steps: usize, stride: usize) -> Vec<usize> {
    let mut ts: Vec<usize> = (1..=steps).rev().step_by(stride).collect();
    if ts.last() != Some(&1) {
        ts.push(1);
    }
    ts
}

/// The `index`-th sample of a request.
pub fn sample_one(
    model: &DenoiserModel,
    req: &SampleRequest,
    sched: &NoiseSchedule,
    hist: Option<&CornerHistogram>,
    opts: SamplerOptions,
    index: usize,
) -> Result<Floorplan> {
    req.validate()?;
    if opts.stride == 0 {
        return Err(Error::validation("stride must be at least 1"));
    }
    let cfg = &model.config;
    cfg.validate(Some(sched.steps()))?;
    let seed = req.seed.wrapping_add(index as u64);
    let counts = match (&req.corner_counts, hist) {
        (Some(c), _) => c.clone(),
        (None, Some(h)) => sample_corner_counts(&req.graph, h, seed)?,
        (None, None) => {
            return Err(Error::validation("corner counts unresolved: give corner_counts or a histogram"))
        }
    };
    let masks = build_masks(&counts, &req.graph, cfg)?;
    let shape = LayoutTensor::zeros(cfg.max_rooms, cfg.max_corners_per_room, &counts)?;
    let mut rng = rng::stream(seed, rng::STREAM_NOISE);
    let mut x = shape.gaussian_like(&mut rng);
    let room_types = req.graph.room_types();
    let guided = req.boundary.is_some() && req.lambda < 1.0;
    let lambda = if req.boundary.is_some() { req.lambda } else { 1.0 };

    let ts = timesteps(sched.steps(), opts.stride);
    for (k, &t) in ts.iter().enumerate() {
        let prev = ts.get(k + 1).copied().unwrap_or(0);
        let snap = t <= cfg.discrete_threshold;
        let run = |boundary: Option<&Boundary>| {
            model.run(&Inputs { x_t: &x, t, room_types, boundary, masks: &masks }, snap)
        };
        let cond = run(req.boundary.as_ref()).map_err(|e| step_failure(e, t))?;
        let slots = cond.slots.clone();
        let (eps, logits) = if guided {
            let un = run(None).map_err(|e| step_failure(e, t))?;
            let blend = |c: &Array2<f64>, u: &Array2<f64>| {
                if lambda == 0.0 {
                    u.clone()
                } else {
                    c * lambda + u * (1.0 - lambda)
                }
            };
            let logits = match (&cond.logits, &un.logits) {
                (Some(c), Some(u)) => Some(blend(c, u)),
                _ => None,
            };
            (blend(&cond.eps, &un.eps), logits)
        } else {
            (cond.eps, cond.logits)
        };

        let ab_t = sched.alpha_bar(t);
        let ab_prev = sched.alpha_bar(prev);
        let alpha = ab_t / ab_prev;
        let beta = 1.0 - alpha;
        let sigma = if prev == 0 { 0.0 } else { sched.posterior_variance(t, prev).sqrt() };
        let x_rows = gather(&x, &slots);
        let x0 = match logits {
            Some(values) => {
                let logits = DiscreteLogits { bins: cfg.coord_bins, slots: slots.clone(), values };
                let mut x0 = Array2::zeros((slots.len(), 2));
                for r in 0..slots.len() {
                    let [bx, by] = logits.argmax(r);
                    x0[[r, 0]] = bin_center(bx, cfg.coord_bins);
                    x0[[r, 1]] = bin_center(by, cfg.coord_bins);
                }
                x0
            }
            // the eps-form update written through a clamped x0 estimate
            None => ((&x_rows - &(eps * (1.0 - ab_t).sqrt())) / ab_t.sqrt()).mapv(|v| v.clamp(-1.0, 1.0)),
        };
        let c0 = ab_prev.sqrt() * beta / (1.0 - ab_t);
        let ct = alpha.sqrt() * (1.0 - ab_prev) / (1.0 - ab_t);
        let mean = x0 * c0 + &x_rows * ct;
        let mut next = x.zeroed();
        for (r, &s) in slots.iter().enumerate() {
            let z: [f64; 2] = if sigma > 0.0 {
                [rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal)]
            } else {
                [0.0, 0.0]
            };
            next.set(s, [mean[[r, 0]] + sigma * z[0], mean[[r, 1]] + sigma * z[1]]);
        }
        if !next.is_finite() {
            return Err(Error::NumericFailure(format!("non-finite layout at sampling step {t}")));
        }
        x = next;
    }
    let x = x.map(|v| v.clamp(-1.0, 1.0));
    Ok(x.to_floorplan(room_types, req.boundary.clone()))
}

fn step_failure(e: Error, t: usize) -> Error {
    match e {
        Error::NumericFailure(m) => Error::NumericFailure(format!("sampling step {t}: {m}")),
        other => other,
    }
}
