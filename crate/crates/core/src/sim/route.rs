use crate::geometry::Vec2;
use crate::topology::{NodeId, TopologicalMap};

use super::SimError;

/// Closed walk over map edges, parameterized by arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct PickingRoute {
    nodes: Vec<NodeId>,
    points: Vec<Vec2>,
    /// `cumulative[i]` is the arc length at `nodes[i]`; one extra entry for
    /// the closing edge back to `nodes[0]`.
    cumulative: Vec<f64>,
}

impl PickingRoute {
    pub fn new(map: &TopologicalMap, nodes: Vec<NodeId>) -> Result<Self, SimError> {
        if nodes.len() < 2 {
            return Err(SimError::Config("picking route needs at least two nodes".into()));
        }
        for (i, &n) in nodes.iter().enumerate() {
            let next = nodes[(i + 1) % nodes.len()];
            if !map.contains(n) || !map.contains(next) || !map.is_adjacent(n, next) {
                return Err(SimError::Config(format!(
                    "picking route step {n} -> {next} is not a map edge"
                )));
            }
        }
        let points: Vec<Vec2> = nodes.iter().map(|&n| map.coords(n)).collect();
        let mut cumulative = Vec::with_capacity(points.len() + 1);
        let mut s = 0.0;
        cumulative.push(0.0);
        for i in 0..points.len() {
            s += points[i].distance(points[(i + 1) % points.len()]);
            cumulative.push(s);
        }
        Ok(Self {
            nodes,
            points,
            cumulative,
        })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn length(&self) -> f64 {
        self.cumulative[self.points.len()]
    }

    /// Wraps any arc length into `[0, length)`.
    pub fn wrap(&self, s: f64) -> f64 {
        let w = s.rem_euclid(self.length());
        if w >= self.length() {
            0.0
        } else {
            w
        }
    }

    /// Index of the segment containing arc length `s`.
    pub fn segment_at(&self, s: f64) -> usize {
        let s = self.wrap(s);
        match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.points.len() - 1),
            Err(i) => i - 1,
        }
    }

    /// Segment endpoints as node ids.
    pub fn segment(&self, i: usize) -> (NodeId, NodeId) {
        (self.nodes[i], self.nodes[(i + 1) % self.nodes.len()])
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = self.wrap(s);
        let i = self.segment_at(s);
        let a = self.points[i];
        let b = self.points[(i + 1) % self.points.len()];
        let len = self.cumulative[i + 1] - self.cumulative[i];
        a.lerp(b, ((s - self.cumulative[i]) / len).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::PolytunnelLayout;

    #[test]
    fn arc_length_walks_the_route() {
        let pm = PolytunnelLayout::default().build().unwrap();
        let route = PickingRoute::new(&pm.map, pm.picking_route.clone()).unwrap();
        assert_eq!(route.point_at(0.0), pm.map.coords(pm.picking_route[0]));
        // first step is header -> first lane node, 2 m
        assert_eq!(route.point_at(1.0), Vec2::new(-1.0, 0.0));
        assert_eq!(route.point_at(route.length()), route.point_at(0.0));
        assert_eq!(route.point_at(-1.0), route.point_at(route.length() - 1.0));
    }

    #[test]
    fn rejects_broken_routes() {
        let pm = PolytunnelLayout::default().build().unwrap();
        assert!(PickingRoute::new(&pm.map, vec![NodeId(0)]).is_err());
        assert!(PickingRoute::new(&pm.map, vec![NodeId(0), NodeId(5)]).is_err());
    }
}
