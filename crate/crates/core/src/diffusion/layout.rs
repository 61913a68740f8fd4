use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::{Boundary, Floorplan, Point, Polygon, RoomType};
use crate::{Error, Result};

/// Room corners scattered into a fixed `max_rooms × max_corners` slot grid.
///
/// Slot `room * max_corners + corner` holds `(x, y)`; real corners of a room are contiguous
/// from corner 0 and every padded slot holds `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutTensor {
    max_rooms: usize,
    max_corners: usize,
    corner_counts: Vec<usize>,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl LayoutTensor {
    /// All-zero tensor with the padding mask implied by `corner_counts`.
    pub fn zeros(max_rooms: usize, max_corners: usize, corner_counts: &[usize]) -> Result<Self> {
        if corner_counts.len() > max_rooms {
            return Err(Error::validation(format!(
                "{} rooms exceed the {max_rooms}-room limit",
                corner_counts.len()
            )));
        }
        let slots = max_rooms * max_corners;
        let mut mask = vec![false; slots];
        for (r, &c) in corner_counts.iter().enumerate() {
            if c > max_corners {
                return Err(Error::validation(format!(
                    "room {r} has {c} corners, limit is {max_corners}"
                )));
            }
            if c < 3 {
                return Err(Error::validation(format!("room {r} has {c} corners, need at least 3")));
            }
            for k in 0..c {
                mask[r * max_corners + k] = true;
            }
        }
        Ok(Self {
            max_rooms,
            max_corners,
            corner_counts: corner_counts.to_vec(),
            values: vec![0.0; slots * 2],
            mask,
        })
    }

    pub fn from_floorplan(plan: &Floorplan, max_rooms: usize, max_corners: usize) -> Result<Self> {
        let mut t = Self::zeros(max_rooms, max_corners, &plan.corner_counts())?;
        for (r, room) in plan.rooms.iter().enumerate() {
            for (k, p) in room.polygon.corners().iter().enumerate() {
                t.set(r * max_corners + k, [p.x, p.y]);
            }
        }
        Ok(t)
    }

    /// Same padding as `self`, values drawn i.i.d. standard normal on real slots.
    pub fn gaussian_like(&self, rng: &mut impl Rng) -> Self {
        let mut out = self.zeroed();
        for s in self.real_slots().collect::<Vec<_>>() {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            out.set(s, [x, y]);
        }
        out
    }

    pub fn zeroed(&self) -> Self {
        Self { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    pub fn max_rooms(&self) -> usize {
        self.max_rooms
    }

    pub fn max_corners(&self) -> usize {
        self.max_corners
    }

    pub fn num_slots(&self) -> usize {
        self.mask.len()
    }

    pub fn num_rooms(&self) -> usize {
        self.corner_counts.len()
    }

    pub fn corner_counts(&self) -> &[usize] {
        &self.corner_counts
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn slot(&self, room: usize, corner: usize) -> usize {
        room * self.max_corners + corner
    }

    pub fn room_of(&self, slot: usize) -> usize {
        slot / self.max_corners
    }

    pub fn corner_of(&self, slot: usize) -> usize {
        slot % self.max_corners
    }

    pub fn get(&self, slot: usize) -> [f64; 2] {
        [self.values[2 * slot], self.values[2 * slot + 1]]
    }

    /// Writes a real slot; padded slots stay zero.
    pub fn set(&mut self, slot: usize, v: [f64; 2]) {
        if self.mask[slot] {
            self.values[2 * slot] = v[0];
            self.values[2 * slot + 1] = v[1];
        }
    }

    pub fn real_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn same_shape(&self, other: &LayoutTensor) -> bool {
        self.max_rooms == other.max_rooms && self.max_corners == other.max_corners && self.mask == other.mask
    }

    /// Elementwise map over real slots, result shaped like `self`.
    pub fn zip_map(&self, other: &LayoutTensor, f: impl Fn(f64, f64) -> f64) -> Result<LayoutTensor> {
        if !self.same_shape(other) {
            return Err(Error::validation("layout tensors differ in shape or padding"));
        }
        let mut out = self.zeroed();
        for (i, v) in out.values.iter_mut().enumerate() {
            if self.mask[i / 2] {
                *v = f(self.values[i], other.values[i]);
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> LayoutTensor {
        let mut out = self.zeroed();
        for (i, v) in out.values.iter_mut().enumerate() {
            if self.mask[i / 2] {
                *v = f(self.values[i]);
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn padding_is_zero(&self) -> bool {
        self.values.iter().enumerate().all(|(i, &v)| self.mask[i / 2] || v == 0.0)
    }

    /// Reads rooms back out; polygons are unchecked since generated corners may be degenerate.
    pub fn to_floorplan(&self, room_types: &[RoomType], boundary: Option<Boundary>) -> Floorplan {
        let rooms = room_types
            .iter()
            .zip(&self.corner_counts)
            .enumerate()
            .map(|(r, (&t, &c))| {
                let corners = (0..c)
                    .map(|k| {
                        let [x, y] = self.get(self.slot(r, k));
                        Point::new(x, y)
                    })
                    .collect();
                (t, Polygon::from_raw(corners))
            })
            .collect();
        Floorplan::new(rooms, boundary)
    }
}
