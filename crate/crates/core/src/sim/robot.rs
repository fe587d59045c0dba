use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::topology::{NodeId, TopologicalMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotParams {
    /// Driving speed, m/s.
    pub speed: f64,
    /// Starting node; the header of the first row when unset.
    pub start: Option<NodeId>,
    /// Initial charge, percent.
    pub battery: f64,
    /// Charge spent per metre driven, percent.
    pub drain_per_meter: f64,
    /// Leg detector range, metres.
    pub lidar_range: f64,
    /// Per-axis standard deviation of leg detections, metres.
    pub lidar_noise: f64,
    /// Spurious leg detections per second, uniform within range.
    pub lidar_false_positive_rate: f64,
    /// Raised beds block the leg detector's line of sight.
    pub lidar_occlusion: bool,
    /// Tag read range, metres.
    pub rfid_range: f64,
    /// Maximum seconds between planning decisions.
    pub replan_period: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            speed: 1.0,
            start: None,
            battery: 100.0,
            drain_per_meter: 0.02,
            lidar_range: 10.0,
            lidar_noise: 0.1,
            lidar_false_positive_rate: 0.05,
            lidar_occlusion: false,
            rfid_range: 5.0,
            replan_period: 10.0,
        }
    }
}

/// The robot drives between nodes along breadth-first routes.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotAgent {
    /// Last node reached.
    pub node: NodeId,
    pub position: Vec2,
    /// Nodes still to visit, the next one first.
    pub path: VecDeque<NodeId>,
    pub goal: Option<NodeId>,
    pub speed: f64,
    pub battery: f64,
    pub drain_per_meter: f64,
    pub odometer: f64,
}

impl RobotAgent {
    pub fn new(map: &TopologicalMap, start: NodeId, params: &RobotParams) -> Self {
        Self {
            node: start,
            position: map.coords(start),
            path: VecDeque::new(),
            goal: None,
            speed: params.speed,
            battery: params.battery.clamp(0.0, 100.0),
            drain_per_meter: params.drain_per_meter,
            odometer: 0.0,
        }
    }

    /// Node the robot is committed to: the next node when travelling an
    /// edge, otherwise the one it stands on.
    pub fn anchor(&self) -> NodeId {
        self.path.front().copied().unwrap_or(self.node)
    }

    pub fn is_idle(&self) -> bool {
        self.path.is_empty()
    }

    /// Plans a route to `goal`. A robot in the middle of an edge finishes
    /// that edge first.
    pub fn set_goal(&mut self, map: &TopologicalMap, goal: NodeId) {
        let from = self.anchor();
        let mut path: VecDeque<NodeId> = map.route(from, goal).into();
        if self.path.is_empty() {
            path.pop_front();
        }
        self.path = path;
        self.goal = Some(goal);
    }

    /// Drives for `dt` seconds. Returns true when the goal was reached
    /// during this step.
    pub fn step(&mut self, map: &TopologicalMap, dt: f64) -> bool {
        if self.path.is_empty() {
            return false;
        }
        let mut budget = self.speed * dt;
        if self.drain_per_meter > 0.0 {
            budget = budget.min(self.battery / self.drain_per_meter);
        }
        let mut moved = 0.0;
        while budget > 0.0 {
            let Some(&next) = self.path.front() else { break };
            let target = map.coords(next);
            let d = self.position.distance(target);
            if d <= budget {
                self.position = target;
                self.node = next;
                self.path.pop_front();
                budget -= d;
                moved += d;
            } else {
                self.position = self.position + (target - self.position) * (budget / d);
                moved += budget;
                budget = 0.0;
            }
        }
        self.odometer += moved;
        self.battery = (self.battery - self.drain_per_meter * moved).max(0.0);
        self.path.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lane() -> TopologicalMap {
        let coords = (0..5).map(|i| Vec2::new(i as f64 * 2.0, 0.0)).collect();
        TopologicalMap::from_undirected(coords, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap()
    }

    #[test]
    fn drives_along_the_route_and_drains_battery() {
        let map = lane();
        let mut r = RobotAgent::new(&map, NodeId(0), &RobotParams::default());
        r.set_goal(&map, NodeId(3));
        assert_eq!(r.path, VecDeque::from(vec![NodeId(1), NodeId(2), NodeId(3)]));
        assert!(!r.step(&map, 3.0));
        assert_eq!(r.node, NodeId(1));
        assert_eq!(r.position, Vec2::new(3.0, 0.0));
        assert!(r.step(&map, 3.0));
        assert_eq!(r.node, NodeId(3));
        assert!((r.battery - (100.0 - 0.02 * 6.0)).abs() < 1e-12);
    }

    #[test]
    fn replanning_mid_edge_finishes_the_edge() {
        let map = lane();
        let mut r = RobotAgent::new(&map, NodeId(2), &RobotParams::default());
        r.set_goal(&map, NodeId(4));
        r.step(&map, 1.0);
        r.set_goal(&map, NodeId(0));
        assert_eq!(r.path, VecDeque::from(vec![NodeId(3), NodeId(2), NodeId(1), NodeId(0)]));
    }

    #[test]
    fn empty_battery_stops_the_robot() {
        let map = lane();
        let params = RobotParams {
            battery: 0.1,
            drain_per_meter: 0.1,
            ..Default::default()
        };
        let mut r = RobotAgent::new(&map, NodeId(0), &params);
        r.set_goal(&map, NodeId(4));
        for _ in 0..20 {
            r.step(&map, 1.0);
        }
        assert_eq!(r.battery, 0.0);
        assert!(r.odometer <= 1.0 + 1e-9);
    }
}
