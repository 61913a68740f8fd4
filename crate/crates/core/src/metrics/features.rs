use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::scores::mean_std;
use crate::geometry::{extract_adjacency, polygon_area, rasterize, Floorplan, RoomType};
use crate::{rng, Error, Result};

/// Length of [`geometric_features`] vectors.
pub const GEOMETRIC_DIM: usize = 32;
/// Raster side used by the projection extractor.
pub const RASTER_SIZE: usize = 64;

const CONV1: usize = 8;
const CONV2: usize = 16;
const POOLED: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorKind {
    Geometric,
    RasterProjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureExtractor {
    pub kind: ExtractorKind,
    pub dim: usize,
    /// Weight seed; only used by the raster projection.
    pub seed: u64,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::geometric()
    }
}

pub type FeatureVector = Vec<f64>;

impl FeatureExtractor {
    pub fn geometric() -> Self {
        Self { kind: ExtractorKind::Geometric, dim: GEOMETRIC_DIM, seed: 0 }
    }

    pub fn raster_projection(dim: usize, seed: u64) -> Self {
        Self { kind: ExtractorKind::RasterProjection, dim, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::validation("feature dim must be at least 2"));
        }
        if self.kind == ExtractorKind::Geometric && self.dim != GEOMETRIC_DIM {
            return Err(Error::validation(format!("geometric features are {GEOMETRIC_DIM}-dimensional")));
        }
        Ok(())
    }

    pub fn extract(&self, plan: &Floorplan) -> Result<FeatureVector> {
        self.validate()?;
        match self.kind {
            ExtractorKind::Geometric => geometric_features(plan),
            ExtractorKind::RasterProjection => Ok(raster_projection_features(plan, self)),
        }
    }

    pub fn extract_all(&self, plans: &[Floorplan]) -> Result<Vec<FeatureVector>> {
        use rayon::prelude::*;
        plans.par_iter().map(|p| self.extract(p)).collect()
    }
}

/// Fixed 32-dim layout: area fraction per room type (8), room count, mean/std bounding-box
/// aspect ratio, mean/std corner count, adjacency-degree histogram for degrees 0..=3 and
/// ≥4 (5), boundary fill ratio, total wall length, plan bounding-box aspect, zeros.
pub fn geometric_features(plan: &Floorplan) -> Result<FeatureVector> {
    if plan.rooms.is_empty() {
        return Err(Error::validation("cannot extract features from an empty plan"));
    }
    let mut f = vec![0.0; GEOMETRIC_DIM];
    let areas: Vec<f64> = plan.rooms.iter().map(|r| r.polygon.signed_area().abs()).collect();
    let total: f64 = areas.iter().sum();
    if total > 0.0 {
        for (room, a) in plan.rooms.iter().zip(&areas) {
            f[room.room_type.index()] += a / total;
        }
    }
    let n = plan.rooms.len();
    f[RoomType::COUNT] = n as f64;
    let aspects: Vec<f64> = plan
        .rooms
        .iter()
        .map(|r| {
            let (lo, hi) = r.polygon.bbox();
            let (w, h) = (hi.x - lo.x, hi.y - lo.y);
            if w.max(h) > 0.0 { w.min(h) / w.max(h) } else { 0.0 }
        })
        .collect();
    (f[9], f[10]) = mean_std(&aspects);
    let corners: Vec<f64> = plan.rooms.iter().map(|r| r.polygon.len() as f64).collect();
    (f[11], f[12]) = mean_std(&corners);
    let graph = extract_adjacency(plan);
    let mut degree = vec![0usize; n];
    for e in graph.positive_edges() {
        degree[e.i] += 1;
        degree[e.j] += 1;
    }
    for d in degree {
        f[13 + d.min(4)] += 1.0 / n as f64;
    }
    f[18] = match &plan.boundary {
        Some(b) => match polygon_area(b.polygon()) {
            Ok(a) if a > 0.0 => total / a,
            _ => 0.0,
        },
        None => 0.0,
    };
    f[19] = plan.rooms.iter().map(|r| r.polygon.perimeter()).sum();
    if let Some((lo, hi)) = plan.bbox() {
        let (w, h) = (hi.x - lo.x, hi.y - lo.y);
        f[20] = if h > 0.0 { w / h } else { 0.0 };
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure("non-finite geometric feature".into()));
    }
    Ok(f)
}

struct Conv {
    /// `out × in × 3 × 3`, flattened.
    w: Vec<f64>,
    b: Vec<f64>,
    inputs: usize,
    outputs: usize,
}

impl Conv {
    fn random(rng: &mut impl Rng, inputs: usize, outputs: usize) -> Self {
        let std = (2.0 / (9 * inputs) as f64).sqrt();
        let w = (0..outputs * inputs * 9).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
        let b = (0..outputs).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        Self { w, b, inputs, outputs }
    }

    /// 3×3 convolution, stride 2, zero padding 1, followed by ReLU.
    fn apply(&self, x: &Array3<f64>) -> Array3<f64> {
        let (_, h, w) = x.dim();
        let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
        let mut out = Array3::zeros((self.outputs, oh, ow));
        for o in 0..self.outputs {
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = self.b[o];
                    for i in 0..self.inputs {
                        for kr in 0..3 {
                            let Some(y) = (2 * r + kr).checked_sub(1).filter(|&y| y < h) else { continue };
                            for kc in 0..3 {
                                let Some(xc) = (2 * c + kc).checked_sub(1).filter(|&xc| xc < w) else { continue };
                                acc += self.w[((o * self.inputs + i) * 3 + kr) * 3 + kc] * x[[i, y, xc]];
                            }
                        }
                    }
                    out[[o, r, c]] = acc.max(0.0);
                }
            }
        }
        out
    }
}

/// Rasterizes at 64×64, runs two seeded random stride-2 convolutions with ReLU, average
/// pools to 4×4 per channel and projects the result to `extractor.dim` values.
pub fn raster_projection_features(plan: &Floorplan, extractor: &FeatureExtractor) -> FeatureVector {
    let mut rng = rng::stream(extractor.seed, rng::STREAM_FEATURES);
    let conv1 = Conv::random(&mut rng, 1, CONV1);
    let conv2 = Conv::random(&mut rng, CONV1, CONV2);
    let pooled_len = CONV2 * POOLED * POOLED;
    let proj = Array2::from_shape_simple_fn((pooled_len, extractor.dim), || {
        rng.sample::<f64, _>(StandardNormal) / (pooled_len as f64).sqrt()
    });

    let raster = rasterize(plan, RASTER_SIZE);
    let input = Array3::from_shape_fn((1, RASTER_SIZE, RASTER_SIZE), |(_, r, c)| raster.get(r, c) as f64);
    let h = conv2.apply(&conv1.apply(&input));
    let (_, side, _) = h.dim();
    let win = side / POOLED;
    let mut pooled = Array2::zeros((1, pooled_len));
    for ch in 0..CONV2 {
        for pr in 0..POOLED {
            for pc in 0..POOLED {
                let mut s = 0.0;
                for r in pr * win..(pr + 1) * win {
                    for c in pc * win..(pc + 1) * win {
                        s += h[[ch, r, c]];
                    }
                }
                pooled[[0, (ch * POOLED + pr) * POOLED + pc]] = s / (win * win) as f64;
            }
        }
    }
    pooled.dot(&proj).into_raw_vec_and_offset().0
}
