use serde::{Deserialize, Serialize};

use super::{Floorplan, Point, Polygon};
use crate::dataset::{BubbleGraph, Edge};

/// When two generated rooms count as realizing a graph edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdjacencyThresholds {
    /// Largest wall-to-wall gap, in normalized units.
    pub gap: f64,
    /// Shortest facing stretch that counts as shared wall.
    pub min_facing: f64,
}

impl Default for AdjacencyThresholds {
    fn default() -> Self {
        Self { gap: 0.02, min_facing: 0.05 }
    }
}

pub fn extract_adjacency(plan: &Floorplan) -> BubbleGraph {
    extract_adjacency_with(plan, &AdjacencyThresholds::default())
}

/// Full pairwise graph: one triplet per unordered room pair, `+1` when adjacent.
pub fn extract_adjacency_with(plan: &Floorplan, th: &AdjacencyThresholds) -> BubbleGraph {
    let n = plan.rooms.len();
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let touching = rooms_adjacent(&plan.rooms[i].polygon, &plan.rooms[j].polygon, th);
            edges.push(Edge::new(i, touching, j));
        }
    }
    BubbleGraph::from_parts_unchecked(plan.room_types(), edges)
}

pub(crate) fn rooms_adjacent(a: &Polygon, b: &Polygon, th: &AdjacencyThresholds) -> bool {
    a.edges().any(|ea| {
        b.edges()
            .any(|eb| facing_length(ea, eb, th.gap) >= th.min_facing || facing_length(eb, ea, th.gap) >= th.min_facing)
    })
}

/// Length of the stretch of `a` over which `b` runs within `gap` of `a`'s supporting line.
fn facing_length((a0, a1): (Point, Point), (b0, b1): (Point, Point), gap: f64) -> f64 {
    let dir = a1.sub(a0);
    let len = dir.norm();
    if len == 0.0 {
        return 0.0;
    }
    let u = dir.scale(1.0 / len);
    let (s0, d0) = (b0.sub(a0).dot(u), u.cross(b0.sub(a0)));
    let (s1, d1) = (b1.sub(a0).dot(u), u.cross(b1.sub(a0)));
    if (s1 - s0).abs() < 1e-12 {
        return 0.0;
    }
    let lo = s0.min(s1).max(0.0);
    let hi = s0.max(s1).min(len);
    if hi <= lo {
        return 0.0;
    }
    // perpendicular offset of b varies linearly with the projection
    let offset_at = |s: f64| d0 + (d1 - d0) * (s - s0) / (s1 - s0);
    let (olo, ohi) = (offset_at(lo), offset_at(hi));
    if olo.abs() <= gap && ohi.abs() <= gap {
        return hi - lo;
    }
    // clip to the sub-interval where |offset| <= gap
    let mut a = lo;
    let mut b = hi;
    let slope = (ohi - olo) / (hi - lo);
    if slope.abs() < 1e-15 {
        return 0.0;
    }
    for bound in [-gap, gap] {
        let s = lo + (bound - olo) / slope;
        if slope > 0.0 {
            if bound < 0.0 {
                a = a.max(s);
            } else {
                b = b.min(s);
            }
        } else if bound < 0.0 {
            b = b.min(s);
        } else {
            a = a.max(s);
        }
    }
    (b - a).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RoomType;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        Polygon::new(vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
        .unwrap()
    }

    fn pair(a: Polygon, b: Polygon) -> BubbleGraph {
        extract_adjacency(&Floorplan::new(vec![(RoomType::Living, a), (RoomType::Kitchen, b)], None))
    }

    #[test]
    fn shared_edge_is_adjacent() {
        let g = pair(rect(0.0, 0.0, 1.0, 1.0), rect(1.0, 0.0, 2.0, 1.0));
        assert_eq!(g.edges(), &[Edge::new(0, true, 1)]);
    }

    #[test]
    fn far_rooms_are_not_adjacent() {
        let g = pair(rect(0.0, 0.0, 1.0, 1.0), rect(1.5, 0.0, 2.5, 1.0));
        assert_eq!(g.edges(), &[Edge::new(0, false, 1)]);
    }

    #[test]
    fn small_gap_with_long_overlap_is_adjacent() {
        // gap 0.015 <= 0.02, facing overlap 0.5 >= 0.05
        let g = pair(rect(0.0, 0.0, 1.0, 1.0), rect(1.015, 0.5, 2.0, 1.5));
        assert_eq!(g.edges(), &[Edge::new(0, true, 1)]);
    }

    #[test]
    fn corner_touch_is_not_adjacent() {
        let g = pair(rect(0.0, 0.0, 1.0, 1.0), rect(1.0, 1.0, 2.0, 2.0));
        assert_eq!(g.edges(), &[Edge::new(0, false, 1)]);
        // overlap shorter than the facing threshold
        let g = pair(rect(0.0, 0.0, 1.0, 1.0), rect(1.0, 0.97, 2.0, 2.0));
        assert_eq!(g.edges(), &[Edge::new(0, false, 1)]);
    }

    #[test]
    fn tilted_walls_within_gap() {
        // b's wall drifts from 0.0 to 0.03 away; only the part within 0.02 counts
        let a = (Point::new(0.0, 0.0), Point::new(1.0, 0.0));
        let b = (Point::new(0.0, 0.0), Point::new(1.0, 0.03));
        let l = facing_length(a, b, 0.02);
        assert!((l - 2.0 / 3.0).abs() < 1e-9, "{l}");
    }

    #[test]
    fn symmetric_under_room_permutation() {
        let rooms = vec![
            rect(0.0, 0.0, 0.4, 0.4),
            rect(0.4, 0.0, 0.8, 0.4),
            rect(0.0, 0.41, 0.8, 0.8),
            rect(-0.5, -0.5, -0.2, -0.2),
        ];
        let plan = Floorplan::new(rooms.iter().cloned().map(|p| (RoomType::Bedroom, p)).collect(), None);
        let g = extract_adjacency(&plan);
        let perm = [2usize, 0, 3, 1];
        let permuted = Floorplan::new(
            perm.iter().map(|&k| (RoomType::Bedroom, rooms[k].clone())).collect(),
            None,
        );
        let gp = extract_adjacency(&permuted);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(gp.is_connected(i, j), g.is_connected(perm[i], perm[j]));
                }
            }
        }
    }
}
