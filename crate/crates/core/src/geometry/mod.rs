//! Exact 2-D polygon mathematics and floorplan structure.
//!
//! Coordinates live in the normalized plan frame (`[-1, 1]²`, y-axis up).

mod adjacency;
mod containment;
mod raster;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use adjacency::{extract_adjacency, extract_adjacency_with, AdjacencyThresholds};
pub use containment::{out_of_boundary_ratio, out_of_boundary_ratio_with, MonteCarlo};
pub use raster::{rasterize, Raster};

/// Distance below which two points are considered identical.
pub const POINT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        self.sub(o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point::new(x, y)
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Room-type vocabulary. The discriminant order is the one-hot index used by the
/// denoiser, the rasterizer and the feature extractors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoomType {
    Living,
    Kitchen,
    Bedroom,
    Bathroom,
    Balcony,
    Corridor,
    Storage,
    Other,
}

impl RoomType {
    pub const COUNT: usize = 8;

    pub const ALL: [RoomType; Self::COUNT] = [
        RoomType::Living,
        RoomType::Kitchen,
        RoomType::Bedroom,
        RoomType::Bathroom,
        RoomType::Balcony,
        RoomType::Corridor,
        RoomType::Storage,
        RoomType::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RoomType::Living => "living",
            RoomType::Kitchen => "kitchen",
            RoomType::Bedroom => "bedroom",
            RoomType::Bathroom => "bathroom",
            RoomType::Balcony => "balcony",
            RoomType::Corridor => "corridor",
            RoomType::Storage => "storage",
            RoomType::Other => "other",
        }
    }
}

impl fmt::Display for RoomType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoomType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RoomType::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown room type `{s}`")))
    }
}

/// Closed polygonal loop; the last corner connects back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    corners: Vec<Point>,
}

impl Polygon {
    /// Validated constructor: at least three finite corners and no repeated consecutive corner.
    pub fn new(corners: Vec<Point>) -> Result<Self> {
        if corners.len() < 3 {
            return Err(Error::validation(format!(
                "polygon needs at least 3 corners, got {}",
                corners.len()
            )));
        }
        if let Some(i) = corners.iter().position(|p| !p.is_finite()) {
            return Err(Error::validation(format!("corner {i} is not finite")));
        }
        let n = corners.len();
        for i in 0..n {
            if corners[i].dist(corners[(i + 1) % n]) <= POINT_EPS {
                return Err(Error::validation(format!(
                    "corners {i} and {} coincide",
                    (i + 1) % n
                )));
            }
        }
        Ok(Self { corners })
    }

    /// Unchecked constructor for generated output, which may be degenerate or self-intersecting.
    pub fn from_raw(corners: Vec<Point>) -> Self {
        Self { corners }
    }

    pub fn corners(&self) -> &[Point] {
        &self.corners
    }

    pub fn len(&self) -> usize {
        self.corners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corners.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.corners.len();
        (0..n).map(move |i| (self.corners[i], self.corners[(i + 1) % n]))
    }

    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.cross(b)).sum::<f64>()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.dist(b)).sum()
    }

    pub fn reversed(&self) -> Polygon {
        let mut c = self.corners.clone();
        c.reverse();
        Polygon { corners: c }
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bbox(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.corners {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Polygon {
        Polygon { corners: self.corners.iter().map(|&p| f(p)).collect() }
    }

    pub fn is_simple(&self) -> bool {
        let n = self.corners.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            let (a, b) = (self.corners[i], self.corners[(i + 1) % n]);
            for j in (i + 1)..n {
                // adjacent edges share a corner by construction
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (c, d) = (self.corners[j], self.corners[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }
}

/// Outer loop enclosing every room; stored counter-clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Boundary {
    polygon: Polygon,
}

impl Boundary {
    pub fn new(polygon: Polygon) -> Self {
        let polygon = if polygon.signed_area() < 0.0 { polygon.reversed() } else { polygon };
        Self { polygon }
    }

    pub fn polygon(&self) -> &Polygon {
        &self.polygon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Room {
    pub room_type: RoomType,
    pub polygon: Polygon,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Floorplan {
    pub rooms: Vec<Room>,
    pub boundary: Option<Boundary>,
}

impl Floorplan {
    /// Builds a plan from `(type, polygon)` pairs, assigning indices `0..N`.
    pub fn new(rooms: Vec<(RoomType, Polygon)>, boundary: Option<Boundary>) -> Self {
        let rooms = rooms
            .into_iter()
            .enumerate()
            .map(|(index, (room_type, polygon))| Room { room_type, polygon, index })
            .collect();
        Self { rooms, boundary }
    }

    pub fn room_types(&self) -> Vec<RoomType> {
        self.rooms.iter().map(|r| r.room_type).collect()
    }

    pub fn corner_counts(&self) -> Vec<usize> {
        self.rooms.iter().map(|r| r.polygon.len()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, room) in self.rooms.iter().enumerate() {
            if room.index != i {
                return Err(Error::validation(format!(
                    "room at position {i} carries index {}",
                    room.index
                )));
            }
            Polygon::new(room.polygon.corners.clone())
                .map_err(|e| Error::validation(format!("room {i}: {e}")))?;
            if !room.polygon.is_simple() {
                return Err(Error::validation(format!("room {i} is self-intersecting")));
            }
        }
        if let Some(b) = &self.boundary {
            Polygon::new(b.polygon.corners.clone())
                .map_err(|e| Error::validation(format!("boundary: {e}")))?;
            if !b.polygon.is_simple() {
                return Err(Error::validation("boundary is self-intersecting"));
            }
        }
        Ok(())
    }

    pub fn all_points(&self) -> impl Iterator<Item = Point> + '_ {
        self.rooms
            .iter()
            .flat_map(|r| r.polygon.corners.iter().copied())
            .chain(self.boundary.iter().flat_map(|b| b.polygon.corners.iter().copied()))
    }

    pub fn bbox(&self) -> Option<(Point, Point)> {
        let mut it = self.all_points().peekable();
        it.peek()?;
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in it {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        Some((lo, hi))
    }

    pub fn map_points(&self, f: impl Fn(Point) -> Point + Copy) -> Floorplan {
        Floorplan {
            rooms: self
                .rooms
                .iter()
                .map(|r| Room { room_type: r.room_type, polygon: r.polygon.map(f), index: r.index })
                .collect(),
            boundary: self.boundary.as_ref().map(|b| Boundary { polygon: b.polygon.map(f) }),
        }
    }
}

/// Shoelace area, orientation independent.
pub fn polygon_area(p: &Polygon) -> Result<f64> {
    let mut distinct: Vec<Point> = Vec::with_capacity(p.len());
    for &c in p.corners() {
        if !distinct.iter().any(|d| d.dist(c) <= POINT_EPS) {
            distinct.push(c);
        }
    }
    if distinct.len() < 3 {
        return Err(Error::validation(format!(
            "degenerate polygon: {} distinct corners",
            distinct.len()
        )));
    }
    Ok(p.signed_area().abs())
}

/// Even-odd containment; points within [`POINT_EPS`] of an edge count as inside.
pub fn point_in_polygon(pt: Point, p: &Polygon) -> bool {
    if p.edges().any(|(a, b)| point_segment_distance(pt, a, b) <= POINT_EPS) {
        return true;
    }
    even_odd(pt, p.corners())
}

pub(crate) fn even_odd(pt: Point, corners: &[Point]) -> bool {
    let n = corners.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (corners[i], corners[j]);
        if (a.y > pt.y) != (b.y > pt.y) {
            let x = a.x + (pt.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if pt.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a.add(ab.scale(t)))
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    b.sub(a).cross(c.sub(a))
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) - POINT_EPS
        && p.x <= a.x.max(b.x) + POINT_EPS
        && p.y >= a.y.min(b.y) - POINT_EPS
        && p.y <= a.y.max(b.y) + POINT_EPS
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1.abs() <= POINT_EPS && on_segment(c, d, a))
        || (d2.abs() <= POINT_EPS && on_segment(c, d, b))
        || (d3.abs() <= POINT_EPS && on_segment(a, b, c))
        || (d4.abs() <= POINT_EPS && on_segment(a, b, d))
}

/// Andrew's monotone chain; returns the hull counter-clockwise without collinear points.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.dist(*b) <= POINT_EPS);
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2
                && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 1e-12
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, s: f64) -> Polygon {
        Polygon::new(vec![
            Point::new(x0, y0),
            Point::new(x0 + s, y0),
            Point::new(x0 + s, y0 + s),
            Point::new(x0, y0 + s),
        ])
        .unwrap()
    }

    #[test]
    fn unit_square_area() {
        let sq = square(0.0, 0.0, 1.0);
        assert_eq!(polygon_area(&sq).unwrap(), 1.0);
        assert_eq!(polygon_area(&sq.reversed()).unwrap(), 1.0);
    }

    #[test]
    fn triangle_area() {
        let tri = Polygon::new(vec![Point::new(0.0, 0.0), Point::new(4.0, 0.0), Point::new(0.0, 3.0)])
            .unwrap();
        // half base times height
        assert_eq!(polygon_area(&tri).unwrap(), 0.5 * 4.0 * 3.0);
    }

    #[test]
    fn degenerate_area_is_an_error() {
        let p = Polygon::from_raw(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 0.0)]);
        assert!(matches!(polygon_area(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn polygon_validation() {
        assert!(Polygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).is_err());
        assert!(Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0)
        ])
        .is_err());
        let bowtie = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        assert!(!bowtie.is_simple());
        assert!(square(0.0, 0.0, 1.0).is_simple());
    }

    #[test]
    fn containment_examples() {
        let sq = square(0.0, 0.0, 1.0);
        assert!(point_in_polygon(Point::new(0.5, 0.5), &sq));
        assert!(!point_in_polygon(Point::new(2.0, 2.0), &sq));
        assert!(point_in_polygon(Point::new(1.0, 0.5), &sq));
        assert!(point_in_polygon(Point::new(0.0, 0.0), &sq));
    }

    #[test]
    fn boundary_is_counter_clockwise() {
        let b = Boundary::new(square(0.0, 0.0, 1.0).reversed());
        assert!(b.polygon().signed_area() > 0.0);
    }

    #[test]
    fn hull_of_square_with_interior_points() {
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.5, 0.5),
            Point::new(1.0, 1.0),
            Point::new(0.5, 0.0),
            Point::new(0.0, 1.0),
        ];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert!((Polygon::from_raw(hull).signed_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn room_type_round_trip() {
        for t in RoomType::ALL {
            assert_eq!(t.as_str().parse::<RoomType>().unwrap(), t);
            assert_eq!(RoomType::from_index(t.index()), Some(t));
        }
        assert!("attic".parse::<RoomType>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn area_translation_scale_invariance(
                dx in -5.0f64..5.0, dy in -5.0f64..5.0, s in 0.1f64..4.0,
                w in 0.1f64..2.0, h in 0.1f64..2.0, skew in -1.0f64..1.0,
            ) {
                let p = Polygon::new(vec![
                    Point::new(0.0, 0.0), Point::new(w, 0.0),
                    Point::new(w + skew, h), Point::new(skew * 0.5, h * 1.3),
                ]).unwrap();
                let a = polygon_area(&p).unwrap();
                let moved = p.map(|q| Point::new(q.x + dx, q.y + dy));
                prop_assert!((polygon_area(&moved).unwrap() - a).abs() < 1e-9);
                let scaled = p.map(|q| q.scale(s));
                prop_assert!((polygon_area(&scaled).unwrap() - a * s * s).abs() < 1e-9 * (1.0 + a * s * s));
                prop_assert!((polygon_area(&p.reversed()).unwrap() - a).abs() < 1e-12);
            }
        }
    }
}
