//! Topological maps: nodes with metric coordinates joined by undirected edges.
//!
//! A [`TopologicalMap`] is immutable once built. Construction validates that
//! adjacency is symmetric, that no node links to itself, that no two nodes
//! share coordinates and that the graph is connected. All-pairs hop counts and
//! breadth-first route lengths are cached at construction, so queries made by
//! the filter, the planner and the metrics are table lookups.

mod document;
mod layout;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

pub use document::{MapDocument, NodeRecord};
pub use layout::{LayoutError, PolytunnelLayout, PolytunnelMap};

/// Dense node index in `[0, |N|)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("failed to parse map document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("failed to read map document: {0}")]
    Io(#[from] std::io::Error),
    #[error("map has no nodes")]
    Empty,
    #[error("node ids must be dense in [0, {count}); missing or repeated id {id}")]
    NonDenseIds { id: usize, count: usize },
    #[error("node {0} has non-finite coordinates")]
    NonFinite(usize),
    #[error("edge references unknown node {0}")]
    UnknownNode(usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("asymmetric adjacency: e[{0}][{1}] = 1 but e[{1}][{0}] = 0")]
    Asymmetric(usize, usize),
    #[error("adjacency matrix must be {expected}x{expected}")]
    AdjacencyShape { expected: usize },
    #[error("nodes {0} and {1} share identical coordinates")]
    DuplicateCoordinates(usize, usize),
    #[error("graph is disconnected: node {0} is unreachable from node 0")]
    Disconnected(usize),
}

/// Cached geometry of a directed half-edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub to: NodeId,
    /// Unit vector pointing from the source node to `to`.
    pub direction: Vec2,
    /// Euclidean length in metres.
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct TopologicalMap {
    coords: Vec<Vec2>,
    /// Outgoing half-edges per node, sorted by destination id.
    edges: Vec<Vec<Edge>>,
    /// Row-major all-pairs hop counts.
    hops: Vec<u32>,
    /// Row-major metric length of the breadth-first route between each pair.
    route_len: Vec<f64>,
    /// Row-major breadth-first parent pointers: `parent[src * n + v]` is the
    /// predecessor of `v` on the route from `src`.
    parent: Vec<usize>,
}

impl TopologicalMap {
    /// Builds a map from coordinates and undirected edges given as index pairs.
    /// Each pair is inserted in both directions.
    pub fn from_undirected(coords: Vec<Vec2>, pairs: &[(usize, usize)]) -> Result<Self, MapError> {
        let n = coords.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(j, k) in pairs {
            if j >= n {
                return Err(MapError::UnknownNode(j));
            }
            if k >= n {
                return Err(MapError::UnknownNode(k));
            }
            if j == k {
                return Err(MapError::SelfLoop(j));
            }
            adjacency[j].push(k);
            adjacency[k].push(j);
        }
        Self::build(coords, adjacency)
    }

    /// Builds a map from a dense boolean adjacency matrix, which must already
    /// be symmetric.
    pub fn from_adjacency(coords: Vec<Vec2>, matrix: &[Vec<bool>]) -> Result<Self, MapError> {
        let n = coords.len();
        if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
            return Err(MapError::AdjacencyShape { expected: n });
        }
        let mut adjacency = vec![Vec::new(); n];
        for j in 0..n {
            for k in 0..n {
                if !matrix[j][k] {
                    continue;
                }
                if j == k {
                    return Err(MapError::SelfLoop(j));
                }
                if !matrix[k][j] {
                    return Err(MapError::Asymmetric(j, k));
                }
                adjacency[j].push(k);
            }
        }
        Self::build(coords, adjacency)
    }

    fn build(coords: Vec<Vec2>, mut adjacency: Vec<Vec<usize>>) -> Result<Self, MapError> {
        let n = coords.len();
        if n == 0 {
            return Err(MapError::Empty);
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(MapError::NonFinite(i));
        }
        for j in 0..n {
            for k in (j + 1)..n {
                if coords[j] == coords[k] {
                    return Err(MapError::DuplicateCoordinates(j, k));
                }
            }
        }

        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }

        let edges: Vec<Vec<Edge>> = adjacency
            .iter()
            .enumerate()
            .map(|(j, list)| {
                list.iter()
                    .map(|&k| {
                        let delta = coords[k] - coords[j];
                        let length = delta.norm();
                        Edge {
                            to: NodeId(k),
                            direction: delta / length,
                            length,
                        }
                    })
                    .collect()
            })
            .collect();

        let mut hops = vec![u32::MAX; n * n];
        let mut route_len = vec![f64::INFINITY; n * n];
        let mut parent = vec![usize::MAX; n * n];
        let mut queue = VecDeque::with_capacity(n);
        for src in 0..n {
            let row = src * n;
            hops[row + src] = 0;
            route_len[row + src] = 0.0;
            parent[row + src] = src;
            queue.clear();
            queue.push_back(src);
            while let Some(u) = queue.pop_front() {
                for e in &edges[u] {
                    let v = e.to.0;
                    if hops[row + v] == u32::MAX {
                        hops[row + v] = hops[row + u] + 1;
                        route_len[row + v] = route_len[row + u] + e.length;
                        parent[row + v] = u;
                        queue.push_back(v);
                    }
                }
            }
            if let Some(v) = (0..n).find(|&v| hops[row + v] == u32::MAX) {
                return Err(MapError::Disconnected(v));
            }
        }

        Ok(Self {
            coords,
            edges,
            hops,
            route_len,
            parent,
        })
    }

    /// Parses and validates a JSON map document.
    pub fn load<R: std::io::Read>(source: R) -> Result<Self, MapError> {
        let doc: MapDocument = serde_json::from_reader(source)?;
        doc.into_map()
    }

    pub fn load_str(source: &str) -> Result<Self, MapError> {
        let doc: MapDocument = serde_json::from_str(source)?;
        doc.into_map()
    }

    pub fn to_document(&self) -> MapDocument {
        MapDocument::from_map(self)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn node_ids(&self) -> impl ExactSizeIterator<Item = NodeId> + Clone {
        (0..self.coords.len()).map(NodeId)
    }

    pub fn contains(&self, n: NodeId) -> bool {
        n.0 < self.coords.len()
    }

    pub fn coords(&self, n: NodeId) -> Vec2 {
        self.coords[n.0]
    }

    pub fn all_coords(&self) -> &[Vec2] {
        &self.coords
    }

    /// Outgoing edges of `n`, sorted by destination.
    pub fn edges(&self, n: NodeId) -> &[Edge] {
        &self.edges[n.0]
    }

    pub fn neighbors(&self, n: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.edges[n.0].iter().map(|e| e.to)
    }

    pub fn degree(&self, n: NodeId) -> usize {
        self.edges[n.0].len()
    }

    pub fn is_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.edges[a.0].binary_search_by_key(&b, |e| e.to).is_ok()
    }

    pub fn edge(&self, a: NodeId, b: NodeId) -> Option<&Edge> {
        let list = &self.edges[a.0];
        list.binary_search_by_key(&b, |e| e.to).ok().map(|i| &list[i])
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Euclidean distance between two node positions.
    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        self.coords[a.0].distance(self.coords[b.0])
    }

    /// Breadth-first hop distance; 0 iff `a == b`.
    pub fn shortest_path_hops(&self, a: NodeId, b: NodeId) -> u32 {
        self.hops[a.0 * self.len() + b.0]
    }

    /// Metric length of the breadth-first route from `a` to `b`.
    pub fn route_length(&self, a: NodeId, b: NodeId) -> f64 {
        self.route_len[a.0 * self.len() + b.0]
    }

    /// Node sequence of the breadth-first route from `a` to `b`, inclusive of
    /// both ends.
    pub fn route(&self, a: NodeId, b: NodeId) -> Vec<NodeId> {
        let n = self.len();
        let row = a.0 * n;
        let mut path = vec![b];
        let mut cur = b.0;
        while cur != a.0 {
            cur = self.parent[row + cur];
            path.push(NodeId(cur));
        }
        path.reverse();
        path
    }

    /// Largest hop count between any two nodes.
    pub fn diameter_hops(&self) -> u32 {
        self.hops.iter().copied().max().unwrap_or(0)
    }

    /// Node nearest to `p`; ties go to the lowest id.
    pub fn closest_node(&self, p: Vec2) -> NodeId {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.coords.iter().enumerate() {
            let d = c.distance_squared(p);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        NodeId(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> TopologicalMap {
        TopologicalMap::from_undirected(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)], &[(0, 1)])
            .unwrap()
    }

    /// Five nodes in a line.
    fn lane(n: usize) -> TopologicalMap {
        let coords = (0..n).map(|i| Vec2::new(i as f64, 0.0)).collect();
        let pairs: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        TopologicalMap::from_undirected(coords, &pairs).unwrap()
    }

    #[test]
    fn two_node_map_has_unit_edge() {
        let map = two_node();
        assert_eq!(map.len(), 2);
        assert_eq!(map.distance(NodeId(0), NodeId(1)), 1.0);
        assert_eq!(map.edge(NodeId(0), NodeId(1)).unwrap().length, 1.0);
        assert_eq!(map.neighbors(NodeId(0)).collect::<Vec<_>>(), vec![NodeId(1)]);
    }

    #[test]
    fn edge_directions_are_opposite() {
        let map = lane(3);
        let fwd = map.edge(NodeId(1), NodeId(2)).unwrap().direction;
        let back = map.edge(NodeId(2), NodeId(1)).unwrap().direction;
        assert_eq!(fwd, -back);
    }

    #[test]
    fn hop_counts() {
        let map = lane(10);
        assert_eq!(map.shortest_path_hops(NodeId(4), NodeId(4)), 0);
        assert_eq!(map.shortest_path_hops(NodeId(4), NodeId(5)), 1);
        assert_eq!(map.shortest_path_hops(NodeId(0), NodeId(9)), 9);
        assert_eq!(map.route(NodeId(2), NodeId(5)).len(), 4);
        assert_eq!(map.route_length(NodeId(2), NodeId(5)), 3.0);
        assert_eq!(map.diameter_hops(), 9);
    }

    #[test]
    fn closest_node_and_tie_break() {
        let map = two_node();
        assert_eq!(map.closest_node(Vec2::new(0.4, 0.0)), NodeId(0));
        assert_eq!(map.closest_node(Vec2::new(0.5, 0.0)), NodeId(0));
        assert_eq!(map.closest_node(Vec2::new(0.6, 0.0)), NodeId(1));
        assert_eq!(map.closest_node(Vec2::new(1.0, 0.0)), NodeId(1));
    }

    #[test]
    fn asymmetric_matrix_is_rejected() {
        let coords = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        let matrix = vec![vec![false, true], vec![false, false]];
        assert!(matches!(
            TopologicalMap::from_adjacency(coords, &matrix),
            Err(MapError::Asymmetric(0, 1))
        ));
    }

    #[test]
    fn invalid_maps_are_rejected() {
        let coords = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)];
        assert!(matches!(
            TopologicalMap::from_undirected(coords.clone(), &[(0, 1)]),
            Err(MapError::Disconnected(2))
        ));
        assert!(matches!(
            TopologicalMap::from_undirected(coords.clone(), &[(0, 0)]),
            Err(MapError::SelfLoop(0))
        ));
        assert!(matches!(
            TopologicalMap::from_undirected(coords, &[(0, 3)]),
            Err(MapError::UnknownNode(3))
        ));
        let dup = vec![Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0)];
        assert!(matches!(
            TopologicalMap::from_undirected(dup, &[(0, 1)]),
            Err(MapError::DuplicateCoordinates(0, 1))
        ));
        assert!(matches!(
            TopologicalMap::from_undirected(vec![], &[]),
            Err(MapError::Empty)
        ));
    }

    #[test]
    fn single_node_map_is_valid() {
        let map = TopologicalMap::from_undirected(vec![Vec2::new(3.0, 4.0)], &[]).unwrap();
        assert_eq!(map.degree(NodeId(0)), 0);
        assert_eq!(map.closest_node(Vec2::ZERO), NodeId(0));
    }
}
