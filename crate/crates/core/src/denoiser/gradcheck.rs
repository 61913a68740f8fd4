use serde::{Deserialize, Serialize};

use super::masks::build_masks;
use super::model::{gather, loss_compact, DenoiserModel, Inputs};
use super::ModelConfig;
use crate::dataset::{quantize_coord, BubbleGraph, Edge};
use crate::diffusion::LayoutTensor;
use crate::geometry::{Boundary, Point, Polygon, RoomType};
use crate::{rng, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// Analytic-versus-numeric gradient agreement for one parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorGradError {
    pub case: String,
    pub tensor: String,
    /// `‖analytic − numeric‖ / (‖analytic‖ + ‖numeric‖)`, 0 when both vanish.
    pub relative_error: f64,
}

/// Tiny configuration used by [`gradient_check`].
pub fn gradcheck_config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        num_heads: 2,
        num_blocks: 1,
        max_rooms: 2,
        max_corners_per_room: 4,
        coord_bins: 8,
        discrete_threshold: 32,
        ff_width: 16,
        boundary_rounds: 1,
    }
}

struct Case {
    name: &'static str,
    graph: BubbleGraph,
    counts: Vec<usize>,
    boundary: Option<Boundary>,
    t: usize,
}

fn cases() -> Result<Vec<Case>> {
    let square = Polygon::new(vec![
        Point::new(-0.8, -0.7),
        Point::new(0.9, -0.8),
        Point::new(0.7, 0.8),
        Point::new(-0.6, 0.9),
    ])?;
    Ok(vec![
        Case {
            name: "one room, boundary, discrete loss",
            graph: BubbleGraph::new(vec![RoomType::Living], vec![])?,
            counts: vec![4],
            boundary: Some(Boundary::new(square.clone())),
            t: 7,
        },
        Case {
            name: "one room, null boundary",
            graph: BubbleGraph::new(vec![RoomType::Kitchen], vec![])?,
            counts: vec![4],
            boundary: None,
            t: 300,
        },
        Case {
            name: "two connected rooms",
            graph: BubbleGraph::new(vec![RoomType::Bedroom, RoomType::Bathroom], vec![Edge::new(0, true, 1)])?,
            counts: vec![4, 3],
            boundary: Some(Boundary::new(square)),
            t: 20,
        },
    ])
}

/// Compares backpropagated gradients of the total loss with central finite differences
/// for every parameter tensor of a freshly initialised model.
pub fn gradient_check(seed: u64) -> Result<Vec<TensorGradError>> {
    let mut model = DenoiserModel::new(gradcheck_config(), seed)?;
    // spread the zero-initialised biases and norm parameters so every path is exercised
    let mut r = rng::stream(seed, rng::STREAM_INIT + 100);
    for (_, t) in model.params.tensors_mut() {
        t.mapv_inplace(|v| v + 0.1 * r.sample::<f64, _>(StandardNormal));
    }
    let cfg = model.config.clone();
    let weight = 0.5;
    let mut out = Vec::new();
    for case in cases()? {
        let masks = build_masks(&case.counts, &case.graph, &cfg)?;
        let shape = LayoutTensor::zeros(cfg.max_rooms, cfg.max_corners_per_room, &case.counts)?;
        let x_t = shape.gaussian_like(&mut r);
        let eps = shape.gaussian_like(&mut r);
        let x0 = shape.gaussian_like(&mut r).map(|v| (0.5 * v).tanh());
        let slots = masks.real_slots();
        let targets: Vec<[usize; 2]> = slots
            .iter()
            .map(|&s| {
                let [x, y] = x0.get(s);
                [quantize_coord(x, cfg.coord_bins), quantize_coord(y, cfg.coord_bins)]
            })
            .collect();
        let eps_true = gather(&eps, &slots);
        let gate = case.t <= cfg.discrete_threshold;
        let loss_of = |m: &DenoiserModel| -> Result<_> {
            let inputs = Inputs {
                x_t: &x_t,
                t: case.t,
                room_types: case.graph.room_types(),
                boundary: case.boundary.as_ref(),
                masks: &masks,
            };
            let act = m.run(&inputs, gate)?;
            let (parts, d_eps, d_logits) =
                loss_compact(&act.eps, &eps_true, act.logits.as_ref(), &targets, gate, weight, cfg.coord_bins);
            Ok((parts.total, act, d_eps, d_logits))
        };
        let (_, act, d_eps, d_logits) = loss_of(&model)?;
        let analytic = model.backward(&act.tape, &d_eps, d_logits.as_ref());
        let h = 1e-5;
        let names: Vec<(String, usize)> = model.params.tensors().into_iter().map(|(n, t)| (n, t.len())).collect();
        for (ti, (name, len)) in names.into_iter().enumerate() {
            let mut diff2 = 0.0;
            let mut a2 = 0.0;
            let mut n2 = 0.0;
            let a_tensor = analytic.tensors()[ti].1.clone();
            for k in 0..len {
                let orig = model.params.tensors()[ti].1.as_slice().expect("contiguous")[k];
                let set = |m: &mut DenoiserModel, v: f64| {
                    m.params.tensors_mut()[ti].1.as_slice_mut().expect("contiguous")[k] = v;
                };
                set(&mut model, orig + h);
                let plus = loss_of(&model)?.0;
                set(&mut model, orig - h);
                let minus = loss_of(&model)?.0;
                set(&mut model, orig);
                let numeric = (plus - minus) / (2.0 * h);
                let a = a_tensor.as_slice().expect("contiguous")[k];
                diff2 += (a - numeric).powi(2);
                a2 += a * a;
                n2 += numeric * numeric;
            }
            let denom = a2.sqrt() + n2.sqrt();
            let relative_error = if denom < 1e-12 { diff2.sqrt() } else { diff2.sqrt() / denom };
            out.push(TensorGradError { case: case.name.to_string(), tensor: name, relative_error });
        }
    }
    Ok(out)
}
