use ndarray::Array2;

use super::ModelConfig;
use crate::dataset::BubbleGraph;
use crate::{Error, Result};

/// Attention masks over the padded slot grid (`max_rooms × max_corners` per side).
///
/// `csa`: same room; `gsa`: any two real corners; `rca`: distinct rooms joined by a `+1`
/// edge. `valid` marks real slots.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMasks {
    pub csa: Array2<bool>,
    pub gsa: Array2<bool>,
    pub rca: Array2<bool>,
    pub valid: Vec<bool>,
}

pub fn build_masks(corner_counts: &[usize], graph: &BubbleGraph, cfg: &ModelConfig) -> Result<AttentionMasks> {
    if corner_counts.len() != graph.num_rooms() {
        return Err(Error::validation(format!(
            "{} corner counts for a {}-room graph",
            corner_counts.len(),
            graph.num_rooms()
        )));
    }
    if corner_counts.len() > cfg.max_rooms {
        return Err(Error::validation(format!(
            "{} rooms exceed max_rooms {}",
            corner_counts.len(),
            cfg.max_rooms
        )));
    }
    let mc = cfg.max_corners_per_room;
    if let Some((r, &c)) = corner_counts.iter().enumerate().find(|(_, &c)| c > mc) {
        return Err(Error::validation(format!("room {r} has {c} corners, max_corners_per_room is {mc}")));
    }
    let n = cfg.slots();
    let mut valid = vec![false; n];
    for (r, &c) in corner_counts.iter().enumerate() {
        valid[r * mc..r * mc + c].iter_mut().for_each(|v| *v = true);
    }
    let adj = graph.adjacency_matrix();
    let room = |s: usize| s / mc;
    let gsa = Array2::from_shape_fn((n, n), |(a, b)| valid[a] && valid[b]);
    let csa = Array2::from_shape_fn((n, n), |(a, b)| gsa[[a, b]] && room(a) == room(b));
    let rca = Array2::from_shape_fn((n, n), |(a, b)| {
        gsa[[a, b]] && room(a) != room(b) && adj[room(a)][room(b)]
    });
    Ok(AttentionMasks { csa, gsa, rca, valid })
}

impl AttentionMasks {
    pub fn real_slots(&self) -> Vec<usize> {
        self.valid.iter().enumerate().filter(|(_, &v)| v).map(|(i, _)| i).collect()
    }

    /// Restriction of a mask to the listed slots.
    pub(crate) fn compact(mask: &Array2<bool>, slots: &[usize]) -> Array2<bool> {
        Array2::from_shape_fn((slots.len(), slots.len()), |(a, b)| mask[[slots[a], slots[b]]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Edge;
    use crate::geometry::RoomType;

    fn cfg() -> ModelConfig {
        ModelConfig { max_rooms: 3, max_corners_per_room: 5, ..Default::default() }
    }

    #[test]
    fn two_rooms_without_edges() {
        let g = BubbleGraph::new(vec![RoomType::Living, RoomType::Kitchen], vec![Edge::new(0, false, 1)]).unwrap();
        let m = build_masks(&[4, 4], &g, &cfg()).unwrap();
        assert_eq!(m.csa.iter().filter(|&&v| v).count(), 32);
        assert!(m.rca.iter().all(|&v| !v));
        // slot 4 is padding in room 0
        assert!(!m.gsa[[4, 0]] && !m.gsa[[0, 4]]);
    }

    #[test]
    fn single_positive_edge() {
        let g = BubbleGraph::new(vec![RoomType::Living, RoomType::Kitchen], vec![Edge::new(0, true, 1)]).unwrap();
        let m = build_masks(&[4, 4], &g, &cfg()).unwrap();
        for a in 0..15 {
            for b in 0..15 {
                let want = (a < 4 && (5..9).contains(&b)) || (b < 4 && (5..9).contains(&a));
                assert_eq!(m.rca[[a, b]], want, "{a},{b}");
            }
        }
    }

    #[test]
    fn single_room_csa_equals_gsa() {
        let g = BubbleGraph::new(vec![RoomType::Bedroom], vec![]).unwrap();
        let m = build_masks(&[5], &g, &cfg()).unwrap();
        assert_eq!(m.csa, m.gsa);
    }

    #[test]
    fn limits() {
        let g = BubbleGraph::new(vec![RoomType::Bedroom], vec![]).unwrap();
        assert!(build_masks(&[6], &g, &cfg()).is_err());
        assert!(build_masks(&[4, 4], &g, &cfg()).is_err());
    }
}
