use log::warn;

use crate::geometry::{Boundary, Floorplan, Point, Polygon, RoomType};

/// Cell index of `v` on a uniform grid of `bins` cells over `[-1, 1]`; ties round up.
pub fn quantize_coord(v: f64, bins: usize) -> usize {
    let clamped = if (-1.0..=1.0).contains(&v) {
        v
    } else {
        warn!("coordinate {v} outside [-1, 1] clamped before quantization");
        v.clamp(-1.0, 1.0)
    };
    (((clamped + 1.0) * 0.5 * bins as f64).floor() as usize).min(bins - 1)
}

pub fn bin_center(cell: usize, bins: usize) -> f64 {
    -1.0 + (cell as f64 + 0.5) * 2.0 / bins as f64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedFloorplan {
    pub bins: usize,
    pub rooms: Vec<(RoomType, Vec<[usize; 2]>)>,
    pub boundary: Option<Vec<[usize; 2]>>,
}

pub fn quantize(plan: &Floorplan, bins: usize) -> QuantizedFloorplan {
    let q = |p: &Point| [quantize_coord(p.x, bins), quantize_coord(p.y, bins)];
    QuantizedFloorplan {
        bins,
        rooms: plan
            .rooms
            .iter()
            .map(|r| (r.room_type, r.polygon.corners().iter().map(q).collect()))
            .collect(),
        boundary: plan.boundary.as_ref().map(|b| b.polygon().corners().iter().map(q).collect()),
    }
}

/// Cell centers; collapsed corners are kept, so the result may be degenerate.
pub fn dequantize(q: &QuantizedFloorplan) -> Floorplan {
    let d = |c: &[usize; 2]| Point::new(bin_center(c[0], q.bins), bin_center(c[1], q.bins));
    Floorplan::new(
        q.rooms
            .iter()
            .map(|(t, cells)| (*t, Polygon::from_raw(cells.iter().map(d).collect())))
            .collect(),
        q.boundary
            .as_ref()
            .map(|cells| Boundary::new(Polygon::from_raw(cells.iter().map(d).collect()))),
    )
}
