//! Generator for polytunnel-style farm topologies.
//!
//! Each tunnel holds `rows_per_tunnel` parallel lanes running along +x with
//! `nodes_per_row` nodes each. Every lane is closed by a header node on the
//! left (tunnel entrance) and a footer node on the right. Headers of adjacent
//! rows are chained, as are footers; consecutive tunnels are joined by one
//! connector node on each side. A spur of `storage_nodes` nodes leads from the
//! first left connector (or the first header when there is a single tunnel)
//! out to the storage yard.
//!
//! The defaults give two 30 m tunnels of five rows with ten nodes per row:
//! 100 lane nodes, 20 header/footer nodes, 2 tunnel connectors and a
//! 15-node storage spur, 137 nodes in total.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{MapError, NodeId, TopologicalMap};
use crate::geometry::Vec2;

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("invalid layout parameter `{name}`: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolytunnelLayout {
    pub tunnels: usize,
    pub rows_per_tunnel: usize,
    pub nodes_per_row: usize,
    /// Spacing between consecutive lane nodes, metres.
    pub node_spacing: f64,
    /// Lateral distance between adjacent lanes, metres.
    pub row_spacing: f64,
    /// Extra lateral gap between the last lane of one tunnel and the first
    /// lane of the next, metres.
    pub tunnel_gap: f64,
    /// Distance from the lane ends to the header and footer nodes, metres.
    pub end_offset: f64,
    pub storage_nodes: usize,
    pub storage_spacing: f64,
}

impl Default for PolytunnelLayout {
    fn default() -> Self {
        Self {
            tunnels: 2,
            rows_per_tunnel: 5,
            nodes_per_row: 10,
            node_spacing: 10.0 / 3.0,
            row_spacing: 1.5,
            tunnel_gap: 4.0,
            end_offset: 2.0,
            storage_nodes: 15,
            storage_spacing: 3.0,
        }
    }
}

/// Generated map plus the semantic structure the simulator needs.
#[derive(Debug, Clone)]
pub struct PolytunnelMap {
    pub map: TopologicalMap,
    pub layout: PolytunnelLayout,
    /// Lane nodes per global row, ordered left to right.
    pub lanes: Vec<Vec<NodeId>>,
    pub headers: Vec<NodeId>,
    pub footers: Vec<NodeId>,
    /// Closed walk a picker follows: consecutive entries are adjacent and the
    /// last entry is adjacent to the first.
    pub picking_route: Vec<NodeId>,
}

impl PolytunnelLayout {
    fn validate(&self) -> Result<(), LayoutError> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(LayoutError::Invalid {
                    name,
                    reason: format!("must be a positive finite length, got {v}"),
                })
            }
        };
        let at_least = |name: &'static str, v: usize, min: usize| {
            if v >= min {
                Ok(())
            } else {
                Err(LayoutError::Invalid {
                    name,
                    reason: format!("must be at least {min}, got {v}"),
                })
            }
        };
        at_least("tunnels", self.tunnels, 1)?;
        at_least("rows_per_tunnel", self.rows_per_tunnel, 1)?;
        at_least("nodes_per_row", self.nodes_per_row, 1)?;
        positive("node_spacing", self.node_spacing)?;
        positive("row_spacing", self.row_spacing)?;
        positive("end_offset", self.end_offset)?;
        if self.tunnels > 1 {
            positive("tunnel_gap", self.tunnel_gap)?;
        }
        if self.storage_nodes > 0 {
            positive("storage_spacing", self.storage_spacing)?;
        }
        Ok(())
    }

    pub fn total_rows(&self) -> usize {
        self.tunnels * self.rows_per_tunnel
    }

    pub fn node_count(&self) -> usize {
        let rows = self.total_rows();
        rows * self.nodes_per_row + 2 * rows + 2 * (self.tunnels - 1) + self.storage_nodes
    }

    fn row_y(&self, row: usize) -> f64 {
        let tunnel = row / self.rows_per_tunnel;
        let tunnel_width = (self.rows_per_tunnel - 1) as f64 * self.row_spacing;
        tunnel as f64 * (tunnel_width + self.tunnel_gap) + (row % self.rows_per_tunnel) as f64 * self.row_spacing
    }

    pub fn build(&self) -> Result<PolytunnelMap, LayoutError> {
        self.validate()?;
        let rows = self.total_rows();
        let npr = self.nodes_per_row;
        let lane_end_x = (npr - 1) as f64 * self.node_spacing;
        let header_x = -self.end_offset;
        let footer_x = lane_end_x + self.end_offset;

        let mut coords = Vec::with_capacity(self.node_count());
        let mut pairs = Vec::new();

        let mut lanes = Vec::with_capacity(rows);
        for r in 0..rows {
            let y = self.row_y(r);
            let lane: Vec<NodeId> = (0..npr)
                .map(|c| {
                    coords.push(Vec2::new(c as f64 * self.node_spacing, y));
                    NodeId(coords.len() - 1)
                })
                .collect();
            for w in lane.windows(2) {
                pairs.push((w[0].0, w[1].0));
            }
            lanes.push(lane);
        }

        let side = |x: f64, coords: &mut Vec<Vec2>| -> Vec<NodeId> {
            (0..rows)
                .map(|r| {
                    coords.push(Vec2::new(x, self.row_y(r)));
                    NodeId(coords.len() - 1)
                })
                .collect()
        };
        let headers = side(header_x, &mut coords);
        let footers = side(footer_x, &mut coords);
        for r in 0..rows {
            pairs.push((headers[r].0, lanes[r][0].0));
            pairs.push((footers[r].0, lanes[r][npr - 1].0));
        }

        // Chains along each side; the boundary between tunnels goes through a
        // connector node instead of a direct edge.
        let mut left_connectors = Vec::new();
        let mut right_connectors = Vec::new();
        for r in 0..rows.saturating_sub(1) {
            if (r + 1) % self.rows_per_tunnel == 0 {
                let y = 0.5 * (self.row_y(r) + self.row_y(r + 1));
                coords.push(Vec2::new(header_x, y));
                let left = coords.len() - 1;
                coords.push(Vec2::new(footer_x, y));
                let right = coords.len() - 1;
                pairs.push((headers[r].0, left));
                pairs.push((left, headers[r + 1].0));
                pairs.push((footers[r].0, right));
                pairs.push((right, footers[r + 1].0));
                left_connectors.push(NodeId(left));
                right_connectors.push(NodeId(right));
            } else {
                pairs.push((headers[r].0, headers[r + 1].0));
                pairs.push((footers[r].0, footers[r + 1].0));
            }
        }

        let anchor = left_connectors.first().copied().unwrap_or(headers[0]);
        let mut prev = anchor;
        for i in 0..self.storage_nodes {
            let a = coords[anchor.0];
            coords.push(Vec2::new(a.x - (i + 1) as f64 * self.storage_spacing, a.y));
            let id = coords.len() - 1;
            pairs.push((prev.0, id));
            prev = NodeId(id);
        }

        let map = TopologicalMap::from_undirected(coords, &pairs)?;
        let picking_route = self.picking_route(&lanes, &headers, &footers, &left_connectors, &right_connectors);
        debug_assert!(route_is_closed_walk(&map, &picking_route));

        Ok(PolytunnelMap {
            map,
            layout: self.clone(),
            lanes,
            headers,
            footers,
            picking_route,
        })
    }

    /// Serpentine walk: enter row 0 from the left, run each lane, step to the
    /// adjacent row at the far end and come back in the opposite direction.
    /// After the last row the walk returns along the side chain to row 0.
    fn picking_route(
        &self,
        lanes: &[Vec<NodeId>],
        headers: &[NodeId],
        footers: &[NodeId],
        left_conn: &[NodeId],
        right_conn: &[NodeId],
    ) -> Vec<NodeId> {
        let rows = lanes.len();
        let boundary = |r: usize| (r + 1) % self.rows_per_tunnel == 0;
        let connector = |r: usize, left: bool| {
            let idx = r / self.rows_per_tunnel;
            if left {
                left_conn[idx]
            } else {
                right_conn[idx]
            }
        };

        let mut route = Vec::new();
        for r in 0..rows {
            let left_to_right = r % 2 == 0;
            if left_to_right {
                route.push(headers[r]);
                route.extend(lanes[r].iter().copied());
                route.push(footers[r]);
            } else {
                route.push(footers[r]);
                route.extend(lanes[r].iter().rev().copied());
                route.push(headers[r]);
            }
            if r + 1 < rows && boundary(r) {
                route.push(connector(r, !left_to_right));
            }
        }

        // Walk back down the side chain where the last lane ended.
        let ends_left = rows % 2 == 0;
        let chain = if ends_left { headers } else { footers };
        for r in (0..rows - 1).rev() {
            if boundary(r) {
                route.push(connector(r, ends_left));
            }
            if r == 0 && ends_left {
                // headers[0] opens the route; the loop closes onto it.
                break;
            }
            route.push(chain[r]);
        }
        if !ends_left {
            route.extend(lanes[0].iter().rev().copied());
        }
        route
    }
}

fn route_is_closed_walk(map: &TopologicalMap, route: &[NodeId]) -> bool {
    if route.len() < 2 {
        return false;
    }
    route
        .iter()
        .zip(route.iter().cycle().skip(1))
        .all(|(&a, &b)| map.is_adjacent(a, b))
}

impl PolytunnelMap {
    /// Global row index of a lane node.
    pub fn row_of(&self, n: NodeId) -> Option<usize> {
        self.lanes.iter().position(|lane| lane.contains(&n))
    }

    pub fn route_is_closed_walk(&self) -> bool {
        route_is_closed_walk(&self.map, &self.picking_route)
    }

    /// Raised beds as line segments halfway between adjacent lanes, spanning
    /// the lane length.
    pub fn bed_segments(&self) -> Vec<(Vec2, Vec2)> {
        let lane_end_x = (self.layout.nodes_per_row - 1) as f64 * self.layout.node_spacing;
        (0..self.layout.total_rows().saturating_sub(1))
            .map(|r| {
                let y = 0.5 * (self.layout.row_y(r) + self.layout.row_y(r + 1));
                (Vec2::new(0.0, y), Vec2::new(lane_end_x, y))
            })
            .collect()
    }
}
