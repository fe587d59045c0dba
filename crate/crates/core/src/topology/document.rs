use serde::{Deserialize, Serialize};

use super::{MapError, TopologicalMap};
use crate::geometry::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

/// On-disk map format.
///
/// ```json
/// { "nodes": [{"id": 0, "x": 0.0, "y": 0.0}, {"id": 1, "x": 1.0, "y": 0.0}],
///   "edges": [[0, 1]] }
/// ```
///
/// `edges` lists undirected pairs and is expanded symmetrically. A dense
/// `adjacency` matrix of 0/1 entries may be given instead (or as well); it is
/// checked for symmetry as written.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MapDocument {
    pub nodes: Vec<NodeRecord>,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<u8>>>,
}

impl MapDocument {
    pub fn into_map(self) -> Result<TopologicalMap, MapError> {
        let count = self.nodes.len();
        let mut coords = vec![None; count];
        for rec in &self.nodes {
            match coords.get_mut(rec.id) {
                Some(slot @ None) => *slot = Some(Vec2::new(rec.x, rec.y)),
                _ => return Err(MapError::NonDenseIds { id: rec.id, count }),
            }
        }
        // All slots are filled: `count` records with distinct ids below `count`.
        let coords: Vec<Vec2> = coords.into_iter().map(Option::unwrap).collect();

        let mut matrix = vec![vec![false; count]; count];
        if let Some(dense) = &self.adjacency {
            if dense.len() != count || dense.iter().any(|row| row.len() != count) {
                return Err(MapError::AdjacencyShape { expected: count });
            }
            for (j, row) in dense.iter().enumerate() {
                for (k, &e) in row.iter().enumerate() {
                    matrix[j][k] = e != 0;
                }
            }
            for j in 0..count {
                for k in 0..count {
                    if matrix[j][k] && !matrix[k][j] {
                        return Err(MapError::Asymmetric(j, k));
                    }
                }
            }
        }
        for &[j, k] in &self.edges {
            if j >= count {
                return Err(MapError::UnknownNode(j));
            }
            if k >= count {
                return Err(MapError::UnknownNode(k));
            }
            matrix[j][k] = true;
            matrix[k][j] = true;
        }
        TopologicalMap::from_adjacency(coords, &matrix)
    }

    pub fn from_map(map: &TopologicalMap) -> Self {
        let nodes = map
            .node_ids()
            .map(|n| {
                let c = map.coords(n);
                NodeRecord { id: n.0, x: c.x, y: c.y }
            })
            .collect();
        let mut edges = Vec::with_capacity(map.edge_count());
        for n in map.node_ids() {
            for e in map.edges(n) {
                if n < e.to {
                    edges.push([n.0, e.to.0]);
                }
            }
        }
        Self {
            nodes,
            edges,
            adjacency: None,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("map document serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::NodeId;

    #[test]
    fn loads_minimal_document() {
        let map = TopologicalMap::load_str(
            r#"{"nodes":[{"id":0,"x":0,"y":0},{"id":1,"x":1,"y":0}],"edges":[[0,1]]}"#,
        )
        .unwrap();
        assert_eq!(map.len(), 2);
        assert!(map.is_adjacent(NodeId(1), NodeId(0)));
        assert!((map.distance(NodeId(0), NodeId(1)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_dense_adjacency_is_rejected() {
        let err = TopologicalMap::load_str(
            r#"{"nodes":[{"id":0,"x":0,"y":0},{"id":1,"x":1,"y":0}],
                "adjacency":[[0,1],[0,0]]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, MapError::Asymmetric(0, 1)), "{err}");
    }

    #[test]
    fn dense_symmetric_adjacency_loads() {
        let map = TopologicalMap::load_str(
            r#"{"nodes":[{"id":1,"x":1,"y":0},{"id":0,"x":0,"y":0}],
                "adjacency":[[0,1],[1,0]]}"#,
        )
        .unwrap();
        assert_eq!(map.coords(NodeId(1)), Vec2::new(1.0, 0.0));
        assert_eq!(map.edge_count(), 1);
    }

    #[test]
    fn bad_documents() {
        assert!(matches!(
            TopologicalMap::load_str("{not json"),
            Err(MapError::Parse(_))
        ));
        assert!(matches!(
            TopologicalMap::load_str(r#"{"nodes":[{"id":0,"x":0,"y":0},{"id":0,"x":1,"y":0}]}"#),
            Err(MapError::NonDenseIds { id: 0, .. })
        ));
        assert!(matches!(
            TopologicalMap::load_str(
                r#"{"nodes":[{"id":0,"x":0,"y":0},{"id":1,"x":0,"y":0}],"edges":[[0,1]]}"#
            ),
            Err(MapError::DuplicateCoordinates(0, 1))
        ));
        assert!(matches!(
            TopologicalMap::load_str(r#"{"nodes":[{"id":0,"x":0,"y":0},{"id":1,"x":1,"y":0}]}"#),
            Err(MapError::Disconnected(1))
        ));
    }
}
