use super::{even_odd, Floorplan, Point, RoomType};

/// Row-major grayscale grid; row 0 is the top of the plan (y = +1).
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub resolution: usize,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.resolution + col]
    }

    fn set(&mut self, row: usize, col: usize, v: f32) {
        self.data[row * self.resolution + col] = v;
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }
}

pub fn room_intensity(t: RoomType) -> f32 {
    (t.index() + 1) as f32 / (RoomType::COUNT + 1) as f32
}

fn to_cell(p: Point, res: usize) -> (i64, i64) {
    let col = ((p.x + 1.0) * 0.5 * res as f64).floor() as i64;
    let row = ((1.0 - p.y) * 0.5 * res as f64).floor() as i64;
    (row, col)
}

/// Fills rooms in index order, then draws every room edge at full intensity.
///
/// # Panics
/// If `resolution < 16`.
pub fn rasterize(plan: &Floorplan, resolution: usize) -> Raster {
    assert!(resolution >= 16, "raster resolution must be at least 16");
    let mut r = Raster { resolution, data: vec![0.0; resolution * resolution] };
    let cell = 2.0 / resolution as f64;
    for room in &plan.rooms {
        let v = room_intensity(room.room_type);
        let (lo, hi) = room.polygon.bbox();
        let (r0, c0) = to_cell(Point::new(lo.x, hi.y), resolution);
        let (r1, c1) = to_cell(Point::new(hi.x, lo.y), resolution);
        let last = resolution as i64 - 1;
        for row in r0.clamp(0, last)..=r1.clamp(0, last) {
            let y = 1.0 - (row as f64 + 0.5) * cell;
            for col in c0.clamp(0, last)..=c1.clamp(0, last) {
                let x = -1.0 + (col as f64 + 0.5) * cell;
                if even_odd(Point::new(x, y), room.polygon.corners()) {
                    r.set(row as usize, col as usize, v);
                }
            }
        }
    }
    for room in &plan.rooms {
        for (a, b) in room.polygon.edges() {
            draw_line(&mut r, to_cell(a, resolution), to_cell(b, resolution));
        }
    }
    r
}

/// Bresenham, clipped to the grid.
fn draw_line(r: &mut Raster, (r0, c0): (i64, i64), (r1, c1): (i64, i64)) {
    let res = r.resolution as i64;
    let (dr, dc) = ((r1 - r0).abs(), -(c1 - c0).abs());
    let (sr, sc) = (if r0 < r1 { 1 } else { -1 }, if c0 < c1 { 1 } else { -1 });
    let (mut row, mut col, mut err) = (r0, c0, dr + dc);
    loop {
        if (0..res).contains(&row) && (0..res).contains(&col) {
            r.set(row as usize, col as usize, 1.0);
        }
        if row == r1 && col == c1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dc {
            err += dc;
            row += sr;
        }
        if e2 <= dr {
            err += dr;
            col += sc;
        }
    }
}
