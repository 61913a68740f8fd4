use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geometry::RoomType;
use crate::{Error, Result};

/// One bubble-diagram triplet `(i, c, j)`; on the wire `[i, c, j]` with `c` in `{-1, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 3]", into = "[i64; 3]")]
pub struct Edge {
    pub i: usize,
    pub connected: bool,
    pub j: usize,
}

impl Edge {
    pub fn new(i: usize, connected: bool, j: usize) -> Self {
        Self { i, connected, j }
    }

    pub fn flag(&self) -> i64 {
        if self.connected {
            1
        } else {
            -1
        }
    }
}

impl TryFrom<[i64; 3]> for Edge {
    type Error = Error;

    fn try_from([i, c, j]: [i64; 3]) -> Result<Self> {
        if i < 0 || j < 0 {
            return Err(Error::validation(format!("negative room index in edge [{i},{c},{j}]")));
        }
        let connected = match c {
            1 => true,
            -1 => false,
            other => {
                return Err(Error::validation(format!(
                    "connectivity flag must be -1 or 1, got {other}"
                )))
            }
        };
        Ok(Edge::new(i as usize, connected, j as usize))
    }
}

impl From<Edge> for [i64; 3] {
    fn from(e: Edge) -> Self {
        [e.i as i64, e.flag(), e.j as i64]
    }
}

/// Bubble diagram: typed room nodes plus connectivity triplets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphWire", into = "GraphWire")]
pub struct BubbleGraph {
    room_types: Vec<RoomType>,
    edges: Vec<Edge>,
}

/// Condition-file and HTTP shape of a graph: the room count is the length of `room_types`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphWire {
    pub room_types: Vec<RoomType>,
    #[serde(default)]
    pub edges: Vec<Edge>,
}

impl TryFrom<GraphWire> for BubbleGraph {
    type Error = Error;

    fn try_from(w: GraphWire) -> Result<Self> {
        BubbleGraph::new(w.room_types, w.edges)
    }
}

impl From<BubbleGraph> for GraphWire {
    fn from(g: BubbleGraph) -> Self {
        GraphWire { room_types: g.room_types, edges: g.edges }
    }
}

impl BubbleGraph {
    /// Validates the triplets; `(j, c, i)` with `j > i` is reordered to `(i, c, j)`.
    pub fn new(room_types: Vec<RoomType>, edges: Vec<Edge>) -> Result<Self> {
        if room_types.is_empty() {
            return Err(Error::validation("graph has no rooms"));
        }
        let n = room_types.len();
        let mut seen = BTreeSet::new();
        let mut canon = Vec::with_capacity(edges.len());
        for e in edges {
            let (i, j) = (e.i.min(e.j), e.i.max(e.j));
            if i == j {
                return Err(Error::validation(format!("self-loop on room {i}")));
            }
            if j >= n {
                return Err(Error::validation(format!(
                    "edge ({},{},{}) references room {j} but graph has {n} rooms",
                    e.i,
                    e.flag(),
                    e.j
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::validation(format!("duplicate edge between rooms {i} and {j}")));
            }
            canon.push(Edge::new(i, e.connected, j));
        }
        Ok(Self { room_types, edges: canon })
    }

    pub(crate) fn from_parts_unchecked(room_types: Vec<RoomType>, edges: Vec<Edge>) -> Self {
        Self { room_types, edges }
    }

    pub fn num_rooms(&self) -> usize {
        self.room_types.len()
    }

    pub fn room_types(&self) -> &[RoomType] {
        &self.room_types
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn positive_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.connected)
    }

    /// True when a `+1` triplet links the two rooms (order-insensitive).
    pub fn is_connected(&self, a: usize, b: usize) -> bool {
        let (i, j) = (a.min(b), a.max(b));
        self.edges.iter().any(|e| e.connected && e.i == i && e.j == j)
    }

    /// Dense symmetric adjacency over `+1` edges.
    pub fn adjacency_matrix(&self) -> Vec<Vec<bool>> {
        let n = self.num_rooms();
        let mut m = vec![vec![false; n]; n];
        for e in self.positive_edges() {
            m[e.i][e.j] = true;
            m[e.j][e.i] = true;
        }
        m
    }

    pub fn with_room_types(&self, room_types: Vec<RoomType>) -> Result<Self> {
        if room_types.len() != self.num_rooms() {
            return Err(Error::validation("room type count mismatch"));
        }
        Ok(Self { room_types, edges: self.edges.clone() })
    }

    /// Relabels rooms so that new room `k` is old room `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_rooms();
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(Error::validation("not a permutation"));
            }
            inverse[old] = new;
        }
        if perm.len() != n {
            return Err(Error::validation("not a permutation"));
        }
        let types = perm.iter().map(|&o| self.room_types[o]).collect();
        let edges = self
            .edges
            .iter()
            .map(|e| Edge::new(inverse[e.i], e.connected, inverse[e.j]))
            .collect();
        BubbleGraph::new(types, edges)
    }
}
