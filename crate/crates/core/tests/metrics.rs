use planforge_core::dataset::{BubbleGraph, Edge};
use planforge_core::geometry::{extract_adjacency, Boundary, Floorplan, Point, Polygon, RoomType};
use planforge_core::metrics::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
    Polygon::new(vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)]).unwrap()
}

fn random_features(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

/// Three rooms in a row, each touching the next.
fn strip() -> Floorplan {
    Floorplan::new(
        vec![
            (RoomType::Living, rect(-0.9, -0.3, -0.3, 0.3)),
            (RoomType::Kitchen, rect(-0.3, -0.3, 0.3, 0.3)),
            (RoomType::Bedroom, rect(0.3, -0.3, 0.9, 0.3)),
        ],
        Some(Boundary::new(rect(-0.9, -0.3, 0.9, 0.3))),
    )
}

#[test]
fn fid_of_a_set_with_itself_is_zero() {
    let a = random_features(1, 40, 5);
    assert!(fid(&a, &a).unwrap().abs() < 1e-6);
}

#[test]
fn fid_is_symmetric_and_non_negative() {
    let a = random_features(2, 30, 4);
    let b: Vec<Vec<f64>> = random_features(3, 25, 4).into_iter().map(|v| v.iter().map(|x| 2.0 * x + 0.3).collect()).collect();
    let ab = fid(&a, &b).unwrap();
    let ba = fid(&b, &a).unwrap();
    assert!(ab >= 0.0);
    assert!((ab - ba).abs() < 1e-6);
}

#[test]
fn fid_one_dimensional_closed_form() {
    let a = vec![vec![0.0], vec![2.0]];
    let b = vec![vec![10.0], vec![12.0]];
    assert!((fid(&a, &b).unwrap() - 100.0).abs() < 1e-6);
}

#[test]
fn fid_rejects_too_few_samples() {
    let a = random_features(4, 3, 3);
    assert!(fid(&a, &a).is_err());
}

#[test]
fn diversity_hand_computed() {
    assert_eq!(diversity_score(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap(), 2.0);
    assert_eq!(diversity_score(&vec![vec![1.5, -2.0]; 5]).unwrap(), 0.0);
    assert!(diversity_score(&[vec![1.0]]).is_err());
}

#[test]
fn diversity_matches_per_dimension_variances() {
    let f = random_features(5, 17, 6);
    let n = f.len() as f64;
    let brute: f64 = (0..6)
        .map(|d| {
            let m = f.iter().map(|v| v[d]).sum::<f64>() / n;
            f.iter().map(|v| (v[d] - m).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .sum();
    let ds = diversity_score(&f).unwrap();
    assert!(((ds - brute) / brute).abs() < 1e-10);
    let mut shuffled = f.clone();
    shuffled.reverse();
    assert!((diversity_score(&shuffled).unwrap() - ds).abs() < 1e-12);
}

#[test]
fn graph_compatibility_counts() {
    let plan = strip();
    let own = extract_adjacency(&plan);
    assert_eq!(graph_compatibility(&own, &plan).unwrap(), 0);

    let types = plan.room_types();
    let extra = BubbleGraph::new(types.clone(), vec![Edge::new(0, true, 1), Edge::new(1, true, 2), Edge::new(0, true, 2)]).unwrap();
    assert_eq!(graph_compatibility(&extra, &plan).unwrap(), 1);

    let swapped = own.with_room_types(vec![types[1], types[0], types[2]]).unwrap();
    assert_eq!(graph_compatibility(&swapped, &plan).unwrap(), 2);

    let short = BubbleGraph::new(vec![RoomType::Living], vec![]).unwrap();
    assert!(graph_compatibility(&short, &plan).is_err());
}

#[test]
fn graph_compatibility_one_missing_adjacency_of_five() {
    // a living room touching four rooms on its sides, plus one more link between two of them
    let plan = Floorplan::new(
        vec![
            (RoomType::Living, rect(-0.3, -0.3, 0.3, 0.3)),
            (RoomType::Bedroom, rect(-0.9, -0.3, -0.3, 0.3)),
            (RoomType::Kitchen, rect(0.3, -0.3, 0.9, 0.3)),
            (RoomType::Bathroom, rect(-0.3, 0.3, 0.3, 0.9)),
            (RoomType::Storage, rect(-0.9, -0.9, 0.3, -0.3)),
        ],
        None,
    );
    let own = extract_adjacency(&plan);
    assert_eq!(own.positive_edges().count(), 5);
    let kept: Vec<Edge> = own.positive_edges().skip(1).cloned().collect();
    let target = BubbleGraph::new(plan.room_types(), kept).unwrap();
    assert_eq!(graph_compatibility(&target, &plan).unwrap(), 1);
}

#[test]
fn boundary_compatibility_rates() {
    let b = Boundary::new(rect(-0.5, -0.5, 0.5, 0.5));
    let inside = Floorplan::new(vec![(RoomType::Living, rect(-0.4, -0.4, 0.4, 0.4))], None);
    let outside = Floorplan::new(vec![(RoomType::Living, rect(0.6, 0.6, 0.9, 0.9))], None);
    assert_eq!(boundary_compatibility(&[inside.clone(), inside.clone()], &b, DEFAULT_TAU).unwrap(), 0.0);
    let all_out = vec![outside.clone(); 6];
    assert_eq!(boundary_compatibility(&all_out, &b, DEFAULT_TAU).unwrap(), 1.0);
    let indicators: Vec<f64> = boundary_violations(&all_out, &b, DEFAULT_TAU).iter().map(|&v| v as u8 as f64).collect();
    assert_eq!(mean_std(&indicators), (1.0, 0.0));
    let mixed = vec![inside.clone(), outside, inside.clone(), inside];
    assert_eq!(boundary_compatibility(&mixed, &b, DEFAULT_TAU).unwrap(), 0.25);
}

#[test]
fn boundary_compatibility_is_monotone_in_tau() {
    let b = Boundary::new(rect(-0.5, -0.5, 0.5, 0.5));
    let plans: Vec<Floorplan> = (0..8)
        .map(|k| {
            let s = 0.1 * k as f64;
            Floorplan::new(vec![(RoomType::Bedroom, rect(-0.4 + s, -0.4, 0.4 + s, 0.4))], None)
        })
        .collect();
    let mut last = f64::INFINITY;
    for tau in [0.0, 0.01, 0.05, 0.1, 0.3, 0.6, 1.0] {
        let bc = boundary_compatibility(&plans, &b, tau).unwrap();
        assert!(bc <= last);
        last = bc;
    }
}

#[test]
fn geometric_features_basics() {
    let square = Floorplan::new(vec![(RoomType::Kitchen, rect(-0.5, -0.5, 0.5, 0.5))], None);
    let f = geometric_features(&square).unwrap();
    assert_eq!(f.len(), GEOMETRIC_DIM);
    assert_eq!(f[RoomType::Kitchen.index()], 1.0);
    assert_eq!(f, geometric_features(&square.clone()).unwrap());
    assert!(geometric_features(&Floorplan::new(vec![], None)).is_err());

    let plan = strip();
    let scaled = plan.map_points(|p| p.scale(0.7));
    let (a, b) = (geometric_features(&plan).unwrap(), geometric_features(&scaled).unwrap());
    for k in 0..RoomType::COUNT {
        assert!((a[k] - b[k]).abs() < 1e-12);
    }
}

#[test]
fn raster_projection_is_seeded() {
    let plan = strip();
    let e = FeatureExtractor::raster_projection(16, 7);
    let a = e.extract(&plan).unwrap();
    assert_eq!(a.len(), 16);
    assert_eq!(a, e.extract(&plan).unwrap());
    let other = FeatureExtractor::raster_projection(16, 8).extract(&plan).unwrap();
    assert_ne!(a, other);
}

#[test]
fn raster_projection_blank_plan_golden() {
    let f = raster_projection_features(&Floorplan::new(vec![], None), &FeatureExtractor::raster_projection(8, 42));
    let golden = [
        0.0374669953066993,
        -0.026629952379470335,
        0.016686892100598733,
        -0.0017002024300365266,
        -0.09379422827044825,
        0.0025413693770835574,
        0.04840393128100996,
        0.02671491399126733,
    ];
    for (v, g) in f.iter().zip(golden) {
        assert!((v - g).abs() < 1e-12, "{v} vs {g}");
    }
}
