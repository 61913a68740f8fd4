use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{point_in_polygon, Boundary, Floorplan, Point};
use crate::{rng, Error, Result};

/// Stratified Monte-Carlo settings for area estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        Self { samples: 65_536, seed: 0xB0DA }
    }
}

/// Fraction of total room area lying outside `b`, with default sampling settings.
pub fn out_of_boundary_ratio(plan: &Floorplan, b: &Boundary) -> Result<f64> {
    out_of_boundary_ratio_with(plan, b, &MonteCarlo::default())
}

/// Each room's bounding box receives an equal share of `mc.samples`, laid out as a jittered
/// grid. Containment is even-odd, so self-intersecting generated rooms are still measurable.
pub fn out_of_boundary_ratio_with(plan: &Floorplan, b: &Boundary, mc: &MonteCarlo) -> Result<f64> {
    if plan.rooms.is_empty() {
        return Err(Error::validation("plan has no rooms"));
    }
    let per_room = (mc.samples / plan.rooms.len()).max(1);
    let grid = ((per_room as f64).sqrt().floor() as usize).max(1);
    let mut rng = rng::stream(mc.seed, 0);

    let mut inside_area = 0.0;
    let mut outside_area = 0.0;
    for room in &plan.rooms {
        let (lo, hi) = room.polygon.bbox();
        let (w, h) = (hi.x - lo.x, hi.y - lo.y);
        let cell_area = w * h / (grid * grid) as f64;
        let (mut hits, mut outside) = (0usize, 0usize);
        for gy in 0..grid {
            for gx in 0..grid {
                let jx: f64 = rng.random();
                let jy: f64 = rng.random();
                if cell_area <= 0.0 {
                    continue;
                }
                let p = Point::new(
                    lo.x + (gx as f64 + jx) / grid as f64 * w,
                    lo.y + (gy as f64 + jy) / grid as f64 * h,
                );
                if point_in_polygon(p, &room.polygon) {
                    hits += 1;
                    if !point_in_polygon(p, b.polygon()) {
                        outside += 1;
                    }
                }
            }
        }
        inside_area += hits as f64 * cell_area.max(0.0);
        outside_area += outside as f64 * cell_area.max(0.0);
    }
    if inside_area <= 0.0 {
        return Err(Error::validation("total room area is zero"));
    }
    Ok(outside_area / inside_area)
}
