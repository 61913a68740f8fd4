use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::masks::{build_masks, AttentionMasks};
use super::model::{gather, loss_compact, DenoiserModel, Inputs, LossParts};
use super::params::Params;
use super::TrainConfig;
use crate::dataset::{few_shot_subset, quantize_coord, FloorplanRecord};
use crate::diffusion::{forward_diffuse, LayoutTensor, NoiseSchedule};
use crate::geometry::RoomType;
use crate::{rng, Error, Result};

/// One row of the loss log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    /// Model step after the update.
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub mse: f64,
    pub ce: f64,
}

/// Callbacks invoked by [`train_with`]. Returning an error aborts training.
pub trait TrainHooks {
    fn on_step(&mut self, _rec: &LossRecord) -> Result<()> {
        Ok(())
    }
    /// Called every `checkpoint_every` steps and after the final step.
    fn on_checkpoint(&mut self, _model: &DenoiserModel) -> Result<()> {
        Ok(())
    }
}

impl TrainHooks for () {}

/// A record preprocessed into model inputs.
pub(crate) struct Prepared {
    pub x0: LayoutTensor,
    pub masks: AttentionMasks,
    pub room_types: Vec<RoomType>,
    pub targets: Vec<[usize; 2]>,
    pub record: FloorplanRecord,
}

pub(crate) fn prepare(model: &DenoiserModel, records: &[FloorplanRecord]) -> Result<Vec<Prepared>> {
    let cfg = &model.config;
    records
        .iter()
        .map(|r| {
            r.validate()?;
            let x0 = LayoutTensor::from_floorplan(&r.plan, cfg.max_rooms, cfg.max_corners_per_room)?;
            let masks = build_masks(x0.corner_counts(), &r.graph, cfg)?;
            let targets = masks
                .real_slots()
                .iter()
                .map(|&s| {
                    let [x, y] = x0.get(s);
                    [quantize_coord(x, cfg.coord_bins), quantize_coord(y, cfg.coord_bins)]
                })
                .collect();
            Ok(Prepared { x0, masks, room_types: r.graph.room_types().to_vec(), targets, record: r.clone() })
        })
        .collect()
}

struct Item {
    record: usize,
    t: usize,
    drop_boundary: bool,
    noise_seed: u64,
}

/// Loss and gradient of one training example.
fn item_grad(model: &DenoiserModel, prep: &Prepared, it: &Item, sched: &NoiseSchedule, weight: f64) -> Result<(LossParts, Params)> {
    let eps = prep.x0.gaussian_like(&mut rng::stream(it.noise_seed, rng::STREAM_NOISE));
    let x_t = forward_diffuse(&prep.x0, it.t, &eps, sched)?;
    let boundary = if it.drop_boundary { None } else { prep.record.plan.boundary.as_ref() };
    let gate = it.t <= model.config.discrete_threshold;
    let inputs = Inputs { x_t: &x_t, t: it.t, room_types: &prep.room_types, boundary, masks: &prep.masks };
    let act = model.run(&inputs, gate)?;
    let eps_true = gather(&eps, &act.slots);
    let (parts, d_eps, d_logits) =
        loss_compact(&act.eps, &eps_true, act.logits.as_ref(), &prep.targets, gate, weight, model.config.coord_bins);
    Ok((parts, model.backward(&act.tape, &d_eps, d_logits.as_ref())))
}

struct Adam {
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    fn new(p: &Params) -> Self {
        Self { m: p.zeros_like(), v: p.zeros_like(), t: 0 }
    }

    fn update(&mut self, params: &mut Params, grad: &Params, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let tensors = params.tensors_mut().into_iter().zip(grad.tensors());
        let state = self.m.tensors_mut().into_iter().zip(self.v.tensors_mut());
        for (((_, p), (_, g)), ((_, m), (_, v))) in tensors.zip(state) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
            });
        }
        params.round_to_f32();
    }
}

/// Trains `model` in place and returns the loss log.
pub fn train(model: &mut DenoiserModel, records: &[FloorplanRecord], sched: &NoiseSchedule, cfg: &TrainConfig) -> Result<Vec<LossRecord>> {
    train_with(model, records, sched, cfg, &mut ())
}

/// [`train`] with callbacks for logging and checkpointing.
///
/// A non-finite loss restores the parameters of the last checkpoint (or the starting
/// point) and returns [`Error::Diverged`].
pub fn train_with(
    model: &mut DenoiserModel,
    records: &[FloorplanRecord],
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<Vec<LossRecord>> {
    if records.is_empty() {
        return Err(Error::validation("training needs at least one record"));
    }
    cfg.validate()?;
    model.config.validate(Some(sched.steps()))?;
    let prepared = prepare(model, records)?;
    let mut adam = Adam::new(&model.params);
    let mut rng = rng::stream(cfg.seed, rng::STREAM_TRAIN);
    let mut last_good = (model.params.clone(), model.step);
    let mut log = Vec::with_capacity(cfg.steps);

    for i in 0..cfg.steps {
        let items: Vec<Item> = (0..cfg.batch_size)
            .map(|_| Item {
                record: rng.random_range(0..prepared.len()),
                t: rng.random_range(1..=sched.steps()),
                drop_boundary: rng.random::<f64>() < cfg.p_drop_boundary,
                noise_seed: rng.random(),
            })
            .collect();
        let model_ref = &*model;
        let results: Vec<Result<(LossParts, Params)>> = items
            .par_iter()
            .map(|it| item_grad(model_ref, &prepared[it.record], it, sched, cfg.discrete_loss_weight))
            .collect();

        let mut grad = model.params.zeros_like();
        let mut sum = LossParts { total: 0.0, mse: 0.0, ce: 0.0 };
        let mut failure = None;
        for r in results {
            match r {
                Ok((parts, g)) => {
                    grad.add_assign(&g);
                    sum.total += parts.total;
                    sum.mse += parts.mse;
                    sum.ce += parts.ce;
                }
                Err(Error::NumericFailure(_)) => failure = Some(f64::NAN),
                Err(e) => return Err(e),
            }
        }
        let n = cfg.batch_size as f64;
        let loss = failure.unwrap_or(sum.total / n);
        if !loss.is_finite() || !grad.is_finite() {
            (model.params, model.step) = last_good;
            return Err(Error::Diverged { step: model.step + i + 1, loss });
        }
        grad.scale(1.0 / n);
        let lr = cfg.learning_rate(i);
        adam.update(&mut model.params, &grad, lr, cfg);
        if !model.params.is_finite() {
            let step = model.step + 1;
            (model.params, model.step) = last_good;
            return Err(Error::Diverged { step, loss });
        }
        model.step += 1;
        let rec = LossRecord { step: model.step, lr, total: loss, mse: sum.mse / n, ce: sum.ce / n };
        hooks.on_step(&rec)?;
        log.push(rec);
        let at_checkpoint = cfg.checkpoint_every > 0 && (i + 1) % cfg.checkpoint_every == 0;
        if at_checkpoint || i + 1 == cfg.steps {
            hooks.on_checkpoint(model)?;
            last_good = (model.params.clone(), model.step);
        }
    }
    Ok(log)
}

/// Continues training on a `shots`-record subset. `shots = 0` leaves the model untouched.
pub fn fine_tune(
    model: &mut DenoiserModel,
    records: &[FloorplanRecord],
    shots: usize,
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<Vec<LossRecord>> {
    if shots == 0 {
        return Ok(Vec::new());
    }
    let subset = few_shot_subset(records, shots, cfg.seed)?;
    train_with(model, &subset, sched, cfg, hooks)
}

/// Number of timesteps in the grid used by [`training_mse`].
pub const MSE_GRID: usize = 16;

/// Deterministic conditional noise MSE over every record at `MSE_GRID` evenly spread
/// timesteps, with noise drawn from `seed`.
pub fn training_mse(model: &DenoiserModel, records: &[FloorplanRecord], sched: &NoiseSchedule, seed: u64) -> Result<f64> {
    let prepared = prepare(model, records)?;
    let steps = sched.steps();
    let mut jobs = Vec::new();
    for (r, _) in prepared.iter().enumerate() {
        for k in 0..MSE_GRID {
            let t = (((k as f64 + 0.5) / MSE_GRID as f64) * steps as f64).ceil() as usize;
            jobs.push((r, t.clamp(1, steps), (r * MSE_GRID + k) as u64));
        }
    }
    let mses: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(r, t, k)| {
            let prep = &prepared[r];
            let eps = prep.x0.gaussian_like(&mut rng::stream(seed.wrapping_add(k), rng::STREAM_NOISE));
            let x_t = forward_diffuse(&prep.x0, t, &eps, sched)?;
            let boundary = prep.record.plan.boundary.as_ref();
            let inputs = Inputs { x_t: &x_t, t, room_types: &prep.room_types, boundary, masks: &prep.masks };
            let act = model.run(&inputs, false)?;
            let diff = act.eps - gather(&eps, &act.slots);
            Ok(diff.iter().map(|v| v * v).sum::<f64>() / diff.len() as f64)
        })
        .collect();
    let mut total = 0.0;
    for m in mses {
        total += m?;
    }
    Ok(total / jobs.len() as f64)
}
