use std::f64::consts::PI;

use rand::Rng;

use super::{BubbleGraph, Edge, FloorplanRecord};
use crate::geometry::{convex_hull, Boundary, Floorplan, Point, Polygon, RoomType};
use crate::rng;

/// Living rooms become balconies and balconies become living rooms; geometry is untouched.
pub fn apply_drift(records: &[FloorplanRecord]) -> Vec<FloorplanRecord> {
    let swap = |t: RoomType| match t {
        RoomType::Living => RoomType::Balcony,
        RoomType::Balcony => RoomType::Living,
        other => other,
    };
    records
        .iter()
        .map(|r| {
            let mut plan = r.plan.clone();
            for room in &mut plan.rooms {
                room.room_type = swap(room.room_type);
            }
            let types = r.graph.room_types().iter().map(|&t| swap(t)).collect();
            let graph = r.graph.with_room_types(types).expect("same room count");
            FloorplanRecord { id: r.id.clone(), plan, graph }
        })
        .collect()
}

/// Labels of the five rooms around the central living room, in ring order.
pub const PENTAGON_OUTER_TYPES: [RoomType; 5] = [
    RoomType::Bedroom,
    RoomType::Kitchen,
    RoomType::Bathroom,
    RoomType::Balcony,
    RoomType::Storage,
];

/// Procedural plans with a central regular pentagon ringed by five trapezoidal rooms.
///
/// Room 0 is the pentagon (inner radius in `[0.25, 0.4]`, random rotation). Room `k + 1`
/// extrudes pentagon edge `k` radially outward, so its outer wall is parallel to that edge and
/// neighbouring rooms share a radial wall. The boundary is the convex hull of all rooms.
pub fn gen_pentagon_set(seed: u64, n: usize) -> Vec<FloorplanRecord> {
    let mut rng = rng::stream(seed, 0);
    (0..n)
        .map(|i| {
            let inner: f64 = rng.random_range(0.25..=0.4);
            let depth: f64 = rng.random_range(0.35..=0.5);
            let rotation: f64 = rng.random_range(0.0..2.0 * PI / 5.0);
            let at = |radius: f64, k: usize| {
                let a = rotation + 2.0 * PI * (k % 5) as f64 / 5.0;
                Point::new(radius * a.cos(), radius * a.sin())
            };
            let outer = inner + depth;
            let mut rooms = vec![(
                RoomType::Living,
                Polygon::new((0..5).map(|k| at(inner, k)).collect()).expect("regular pentagon"),
            )];
            for k in 0..5 {
                let quad = vec![at(inner, k), at(outer, k), at(outer, k + 1), at(inner, k + 1)];
                rooms.push((PENTAGON_OUTER_TYPES[k], Polygon::new(quad).expect("trapezoid")));
            }
            let all: Vec<Point> = rooms.iter().flat_map(|(_, p)| p.corners().to_vec()).collect();
            let boundary = Boundary::new(Polygon::new(convex_hull(&all)).expect("hull"));
            let plan = Floorplan::new(rooms, Some(boundary));

            let mut edges: Vec<Edge> = (1..=5).map(|k| Edge::new(0, true, k)).collect();
            for k in 1..=5 {
                let next = k % 5 + 1;
                edges.push(Edge::new(k.min(next), true, k.max(next)));
            }
            let graph = BubbleGraph::new(plan.room_types(), edges).expect("valid ring graph");
            FloorplanRecord::new(format!("pentagon-{seed}-{i:04}"), plan, graph)
                .expect("generated plan is valid")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{extract_adjacency, out_of_boundary_ratio};

    #[test]
    fn drift_swaps_labels_only() {
        let recs = gen_pentagon_set(1, 2);
        let drifted = apply_drift(&recs);
        for (a, b) in recs.iter().zip(&drifted) {
            assert_eq!(b.plan.rooms[0].room_type, RoomType::Balcony);
            assert_eq!(b.plan.rooms[4].room_type, RoomType::Living);
            assert_eq!(b.graph.room_types()[0], RoomType::Balcony);
            for (ra, rb) in a.plan.rooms.iter().zip(&b.plan.rooms) {
                assert_eq!(ra.polygon, rb.polygon);
            }
            assert_eq!(a.plan.boundary, b.plan.boundary);
            b.validate().unwrap();
        }
        assert_eq!(apply_drift(&drifted), recs);
    }

    #[test]
    fn drift_without_labels_is_identity() {
        let mut recs = gen_pentagon_set(2, 1);
        for room in &mut recs[0].plan.rooms {
            room.room_type = RoomType::Bedroom;
        }
        recs[0].graph = recs[0].graph.with_room_types(vec![RoomType::Bedroom; 6]).unwrap();
        assert_eq!(apply_drift(&recs), recs);
    }

    #[test]
    fn pentagon_set_properties() {
        let recs = gen_pentagon_set(7, 20);
        assert_eq!(recs.len(), 20);
        assert_eq!(recs, gen_pentagon_set(7, 20));
        for r in &recs {
            r.validate().unwrap();
            assert_eq!(r.plan.rooms[0].polygon.len(), 5);
            assert_eq!(r.graph.positive_edges().count(), 10);
            assert_eq!(r.graph.positive_edges().filter(|e| e.i == 0).count(), 5);
            let b = r.plan.boundary.as_ref().unwrap();
            assert_eq!(out_of_boundary_ratio(&r.plan, b).unwrap(), 0.0);
            // realized adjacency equals the conditioning graph
            let realized = extract_adjacency(&r.plan);
            for e in realized.edges() {
                assert_eq!(e.connected, r.graph.is_connected(e.i, e.j), "{} {e:?}", r.id);
            }
            for p in r.plan.all_points() {
                assert!(p.x.abs() <= 0.9 && p.y.abs() <= 0.9);
            }
        }
    }
}
