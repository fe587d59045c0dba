//! Conversion of raw sensor events into node-level observations.
//!
//! Every sensor reading reaches a filter as an [`Observation`]: a likelihood
//! over all map nodes, a flag telling whether the reading names a specific
//! person, and for GNSS an estimate of the person's velocity.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::topology::TopologicalMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Gps,
    Lidar,
    Rfid,
}

impl SensorKind {
    pub const ALL: [SensorKind; 3] = [SensorKind::Gps, SensorKind::Lidar, SensorKind::Rfid];

    pub fn as_str(self) -> &'static str {
        match self {
            SensorKind::Gps => "gps",
            SensorKind::Lidar => "lidar",
            SensorKind::Rfid => "rfid",
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifier of a tracked person (GNSS device MAC, RFID tag id).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetId(pub u32);

#[derive(Debug, Error, PartialEq)]
pub enum ObservationError {
    #[error("likelihood has {got} entries, map has {expected} nodes")]
    WrongLength { expected: usize, got: usize },
    #[error("likelihood entry {0} is negative or not finite")]
    InvalidEntry(usize),
    #[error("likelihood is zero on every node")]
    EmptyLikelihood,
    #[error("LIDAR observations cannot be identifying")]
    IdentifyingLidar,
    #[error("non-finite input position")]
    NonFinite,
}

/// Canonical observation handed to a belief filter.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    likelihood: Vec<f64>,
    pub sensor: SensorKind,
    /// `Some` iff the observation is identifying.
    pub target: Option<TargetId>,
    pub velocity: Option<Vec2>,
    pub timestamp: f64,
}

impl Observation {
    pub fn new(
        likelihood: Vec<f64>,
        sensor: SensorKind,
        target: Option<TargetId>,
        velocity: Option<Vec2>,
        timestamp: f64,
    ) -> Result<Self, ObservationError> {
        if let Some(i) = likelihood.iter().position(|l| !l.is_finite() || *l < 0.0) {
            return Err(ObservationError::InvalidEntry(i));
        }
        if !likelihood.iter().any(|&l| l > 0.0) {
            return Err(ObservationError::EmptyLikelihood);
        }
        if sensor == SensorKind::Lidar && target.is_some() {
            return Err(ObservationError::IdentifyingLidar);
        }
        Ok(Self {
            likelihood,
            sensor,
            target,
            velocity,
            timestamp,
        })
    }

    pub fn likelihood(&self) -> &[f64] {
        &self.likelihood
    }

    pub fn is_identifying(&self) -> bool {
        self.target.is_some()
    }

    /// Likelihood rescaled to sum to one.
    pub fn normalized_likelihood(&self) -> Vec<f64> {
        let total: f64 = self.likelihood.iter().sum();
        self.likelihood.iter().map(|l| l / total).collect()
    }

    /// Checks the likelihood length against a map.
    pub fn check_against(&self, map: &TopologicalMap) -> Result<(), ObservationError> {
        if self.likelihood.len() == map.len() {
            Ok(())
        } else {
            Err(ObservationError::WrongLength {
                expected: map.len(),
                got: self.likelihood.len(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorModelConfig {
    /// Spread of the GNSS node kernel, metres.
    pub gps_sigma: f64,
    /// Spread of the leg-detector node kernel, metres.
    pub lidar_sigma: f64,
    /// RFID antenna read range, metres.
    pub rfid_range: f64,
    /// Number of GNSS fixes used for the velocity estimate.
    pub velocity_window: usize,
}

impl Default for SensorModelConfig {
    fn default() -> Self {
        Self {
            gps_sigma: 2.0,
            lidar_sigma: 0.5,
            rfid_range: 5.0,
            velocity_window: 10,
        }
    }
}

/// Gaussian kernel `exp(-d^2 / 2 sigma^2)` evaluated at every node.
///
/// If the point is so far from the map that every entry underflows, the
/// kernel is evaluated relative to the nearest node instead, which keeps the
/// shape and guarantees a positive maximum of 1.
pub fn gaussian_node_kernel(map: &TopologicalMap, p: Vec2, sigma: f64) -> Vec<f64> {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let sq: Vec<f64> = map.all_coords().iter().map(|c| c.distance_squared(p)).collect();
    let raw: Vec<f64> = sq.iter().map(|d2| (-d2 * inv).exp()).collect();
    if raw.iter().any(|&l| l > 0.0) {
        return raw;
    }
    let min = sq.iter().copied().fold(f64::INFINITY, f64::min);
    sq.iter().map(|d2| (-(d2 - min) * inv).exp()).collect()
}

/// Sliding window of recent GNSS fixes for one target.
#[derive(Debug, Clone)]
pub struct VelocityEstimator {
    window: usize,
    poses: VecDeque<(f64, Vec2)>,
}

impl VelocityEstimator {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(2),
            poses: VecDeque::with_capacity(window.max(2)),
        }
    }

    pub fn push(&mut self, t: f64, p: Vec2) {
        if self.poses.len() == self.window {
            self.poses.pop_front();
        }
        self.poses.push_back((t, p));
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Total displacement over total elapsed time across the window.
    pub fn estimate(&self) -> Option<Vec2> {
        let (t0, p0) = *self.poses.front()?;
        let (t1, p1) = *self.poses.back()?;
        let dt = t1 - t0;
        (self.poses.len() >= 2 && dt > 0.0).then(|| (p1 - p0) / dt)
    }

    pub fn clear(&mut self) {
        self.poses.clear();
    }
}

/// Turns a GNSS fix into an identifying observation and feeds the target's
/// velocity estimator.
pub fn gps_to_observation(
    map: &TopologicalMap,
    config: &SensorModelConfig,
    fix: Vec2,
    target: TargetId,
    estimator: &mut VelocityEstimator,
    timestamp: f64,
) -> Result<Observation, ObservationError> {
    if !fix.is_finite() {
        return Err(ObservationError::NonFinite);
    }
    estimator.push(timestamp, fix);
    let likelihood = gaussian_node_kernel(map, fix, config.gps_sigma);
    Observation::new(
        likelihood,
        SensorKind::Gps,
        Some(target),
        estimator.estimate(),
        timestamp,
    )
}

/// Leg detection: same kernel shape as GNSS with a tighter spread. Never
/// identifying and never carries a velocity.
pub fn lidar_to_observation(
    map: &TopologicalMap,
    config: &SensorModelConfig,
    detection: Vec2,
    timestamp: f64,
) -> Result<Observation, ObservationError> {
    if !detection.is_finite() {
        return Err(ObservationError::NonFinite);
    }
    let likelihood = gaussian_node_kernel(map, detection, config.lidar_sigma);
    Observation::new(likelihood, SensorKind::Lidar, None, None, timestamp)
}

/// Tag read by the robot's antenna: linear decay with distance from the
/// robot, zero beyond the read range, normalized to sum to one.
pub fn rfid_to_observation(
    map: &TopologicalMap,
    config: &SensorModelConfig,
    robot: Vec2,
    target: TargetId,
    timestamp: f64,
) -> Result<Observation, ObservationError> {
    if !robot.is_finite() {
        return Err(ObservationError::NonFinite);
    }
    let range = config.rfid_range;
    let mut likelihood: Vec<f64> = map
        .all_coords()
        .iter()
        .map(|c| (1.0 - c.distance(robot) / range).max(0.0))
        .collect();
    let total: f64 = likelihood.iter().sum();
    if total <= 0.0 {
        return Err(ObservationError::EmptyLikelihood);
    }
    likelihood.iter_mut().for_each(|l| *l /= total);
    Observation::new(likelihood, SensorKind::Rfid, Some(target), None, timestamp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{NodeId, PolytunnelLayout};

    fn argmax(v: &[f64]) -> usize {
        v.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
            .0
    }

    fn lane_map() -> TopologicalMap {
        let coords = (0..4).map(|i| Vec2::new(i as f64 * 2.0, 0.0)).collect();
        TopologicalMap::from_undirected(coords, &[(0, 1), (1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn gps_peaks_on_fix_node() {
        let pm = PolytunnelLayout::default().build().unwrap();
        let cfg = SensorModelConfig::default();
        let mut est = VelocityEstimator::new(10);
        let k = pm.lanes[2][6];
        let obs = gps_to_observation(&pm.map, &cfg, pm.map.coords(k), TargetId(1), &mut est, 0.0).unwrap();
        assert_eq!(argmax(obs.likelihood()), k.index());
        assert!(obs.is_identifying());
        assert_eq!(obs.velocity, None);
    }

    #[test]
    fn gps_equidistant_fix_is_symmetric() {
        let map = lane_map();
        let cfg = SensorModelConfig::default();
        let mut est = VelocityEstimator::new(10);
        let obs = gps_to_observation(&map, &cfg, Vec2::new(3.0, 0.0), TargetId(0), &mut est, 0.0).unwrap();
        assert!((obs.likelihood()[1] - obs.likelihood()[2]).abs() < 1e-12);
    }

    #[test]
    fn two_point_velocity() {
        let mut est = VelocityEstimator::new(10);
        assert_eq!(est.estimate(), None);
        est.push(0.0, Vec2::new(0.0, 0.0));
        assert_eq!(est.estimate(), None);
        est.push(1.0, Vec2::new(1.0, 0.0));
        assert_eq!(est.estimate(), Some(Vec2::new(1.0, 0.0)));
    }

    #[test]
    fn velocity_window_drops_old_poses() {
        let mut est = VelocityEstimator::new(3);
        est.push(0.0, Vec2::new(100.0, 0.0));
        for t in 1..=3 {
            est.push(t as f64, Vec2::new(t as f64, 0.0));
        }
        assert_eq!(est.len(), 3);
        assert_eq!(est.estimate(), Some(Vec2::new(1.0, 0.0)));
    }

    #[test]
    fn lidar_is_never_identifying() {
        let map = lane_map();
        let cfg = SensorModelConfig::default();
        let obs = lidar_to_observation(&map, &cfg, Vec2::new(4.0, 0.0), 2.0).unwrap();
        assert!(!obs.is_identifying());
        assert_eq!(argmax(obs.likelihood()), 2);
        let mid = lidar_to_observation(&map, &cfg, Vec2::new(5.0, 0.0), 2.0).unwrap();
        assert!((mid.likelihood()[2] - mid.likelihood()[3]).abs() < 1e-15);
        assert!(Observation::new(vec![1.0; 4], SensorKind::Lidar, Some(TargetId(0)), None, 0.0).is_err());
    }

    #[test]
    fn rfid_peaks_under_robot_and_is_normalized() {
        let map = lane_map();
        let cfg = SensorModelConfig::default();
        let obs = rfid_to_observation(&map, &cfg, map.coords(NodeId(1)), TargetId(4), 0.0).unwrap();
        assert_eq!(argmax(obs.likelihood()), 1);
        assert_eq!(obs.target, Some(TargetId(4)));
        assert!((obs.likelihood().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // node 3 is 4 m away, inside the 5 m range; nothing past it
        assert!(obs.likelihood()[3] > 0.0);
    }

    #[test]
    fn rfid_out_of_range_errors() {
        let map = lane_map();
        let cfg = SensorModelConfig::default();
        let err = rfid_to_observation(&map, &cfg, Vec2::new(100.0, 100.0), TargetId(0), 0.0).unwrap_err();
        assert_eq!(err, ObservationError::EmptyLikelihood);
    }

    #[test]
    fn far_fix_still_yields_positive_kernel() {
        let map = lane_map();
        let k = gaussian_node_kernel(&map, Vec2::new(1e4, 0.0), 0.5);
        assert_eq!(k[3], 1.0);
        assert!(k.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn observation_validation() {
        assert_eq!(
            Observation::new(vec![0.0, 0.0], SensorKind::Gps, None, None, 0.0),
            Err(ObservationError::EmptyLikelihood)
        );
        assert_eq!(
            Observation::new(vec![1.0, -0.1], SensorKind::Gps, None, None, 0.0),
            Err(ObservationError::InvalidEntry(1))
        );
        assert_eq!(
            Observation::new(vec![1.0, f64::NAN], SensorKind::Gps, None, None, 0.0),
            Err(ObservationError::InvalidEntry(1))
        );
    }
}
