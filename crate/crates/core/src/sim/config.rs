use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::belief::{FilterConfig, MotionModel};
use crate::planner::{FuzzyMeasure, PlannerParams};
use crate::sensors::SensorModelConfig;
use crate::topology::{NodeId, PolytunnelLayout};

use super::gps::GpsNoiseParams;
use super::picker::PickerParams;
use super::robot::RobotParams;
use super::SimError;

/// Tracking method under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// GPS only, fixed jump rate, constant teleport chance.
    KhanUnconnected,
    /// GPS only, fixed jump rate, no teleporting.
    KhanConnected,
    LidarGps,
    RfidGps,
    /// RFID, LIDAR and GPS with the adaptive motion model and monitors.
    Ours,
    /// All sensors, monitors disabled.
    NoMonitor,
    /// All sensors, fixed jump rate instead of estimated velocities.
    ConstantSpeed,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::KhanUnconnected,
        Method::KhanConnected,
        Method::LidarGps,
        Method::RfidGps,
        Method::Ours,
        Method::NoMonitor,
        Method::ConstantSpeed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::KhanUnconnected => "khan-unconnected",
            Method::KhanConnected => "khan-connected",
            Method::LidarGps => "lidar-gps",
            Method::RfidGps => "rfid-gps",
            Method::Ours => "ours",
            Method::NoMonitor => "no-monitor",
            Method::ConstantSpeed => "constant-speed",
        }
    }

    /// Name used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Method::KhanUnconnected => "Khan-unconnected",
            Method::KhanConnected => "Khan-connected",
            Method::LidarGps => "LIDAR+GPS",
            Method::RfidGps => "RFID+GPS",
            Method::Ours => "RFID+LIDAR+GPS",
            Method::NoMonitor => "NoMonitor",
            Method::ConstantSpeed => "ConstantSpeed",
        }
    }

    pub fn sensors(self) -> SensorSet {
        match self {
            Method::KhanUnconnected | Method::KhanConnected => SensorSet {
                gps: true,
                lidar: false,
                rfid: false,
            },
            Method::LidarGps => SensorSet {
                gps: true,
                lidar: true,
                rfid: false,
            },
            Method::RfidGps => SensorSet {
                gps: true,
                lidar: false,
                rfid: true,
            },
            Method::Ours | Method::NoMonitor | Method::ConstantSpeed => SensorSet::default(),
        }
    }

    /// Applies the method's changes to a base filter configuration.
    pub fn filter_config(self, base: &FilterConfig, fixed_rate: f64) -> FilterConfig {
        let mut cfg = base.clone();
        match self {
            Method::KhanUnconnected | Method::KhanConnected => {
                cfg.motion = MotionModel::FixedRate { rate: fixed_rate };
                cfg.gains.gps.velocity = 0.0;
                cfg.gains.lidar.velocity = 0.0;
                cfg.gains.rfid.velocity = 0.0;
                cfg.monitors = false;
                cfg.initial_teleport_probability = if self == Method::KhanUnconnected {
                    base.teleport_probability
                } else {
                    0.0
                };
            }
            Method::ConstantSpeed => {
                cfg.motion = MotionModel::FixedRate { rate: fixed_rate };
                cfg.gains.gps.velocity = 0.0;
                cfg.gains.lidar.velocity = 0.0;
                cfg.gains.rfid.velocity = 0.0;
            }
            Method::NoMonitor => cfg.monitors = false,
            Method::LidarGps | Method::RfidGps | Method::Ours => {}
        }
        cfg
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn valid_list<T: Copy>(all: &[T], name: impl Fn(T) -> &'static str) -> String {
    all.iter().map(|&m| name(m)).collect::<Vec<_>>().join(", ")
}

impl FromStr for Method {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            SimError::Config(format!(
                "unknown method `{s}`; valid methods: {}",
                valid_list(&Method::ALL, Method::as_str)
            ))
        })
    }
}

/// Robot navigation policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    #[default]
    Nbs,
    EstimatedNode,
}

impl Policy {
    pub const ALL: [Policy; 2] = [Policy::Nbs, Policy::EstimatedNode];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Nbs => "nbs",
            Policy::EstimatedNode => "estimated-node",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Policy::Nbs => "Next-Best-Sense",
            Policy::EstimatedNode => "EstimatedNode",
        }
    }
}

impl FromStr for Policy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| {
            SimError::Config(format!(
                "unknown policy `{s}`; valid policies: {}",
                valid_list(&Policy::ALL, Policy::as_str)
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSet {
    pub gps: bool,
    pub lidar: bool,
    pub rfid: bool,
}

impl Default for SensorSet {
    fn default() -> Self {
        Self {
            gps: true,
            lidar: true,
            rfid: true,
        }
    }
}

/// Where the map and the pickers' route come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSource {
    /// Build a polytunnel map from layout parameters.
    Generate(PolytunnelLayout),
    /// Load a map document and walk the given closed route.
    File { path: PathBuf, route: Vec<NodeId> },
}

impl Default for MapSource {
    fn default() -> Self {
        MapSource::Generate(PolytunnelLayout::default())
    }
}

/// Everything about the world that does not depend on the method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    /// Simulation tick, seconds.
    pub dt: f64,
    /// Period of GPS fixes, leg detections and tag reads, seconds.
    pub sensor_period: f64,
    /// Period of metric rows, seconds.
    pub metrics_period: f64,
    pub pickers: PickerParams,
    pub gps: GpsNoiseParams,
    pub robot: RobotParams,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            dt: 0.25,
            sensor_period: 1.0,
            metrics_period: 1.0,
            pickers: PickerParams::default(),
            gps: GpsNoiseParams::default(),
            robot: RobotParams::default(),
        }
    }
}

/// One method, one policy, a list of seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: MapSource,
    pub method: Method,
    /// Overrides the method's sensor set.
    pub sensors: Option<SensorSet>,
    pub policy: Policy,
    pub pickers: usize,
    pub seeds: Vec<u64>,
    /// Simulated seconds per run.
    pub duration: f64,
    /// Jump rate of the fixed-rate motion model.
    pub fixed_rate: f64,
    pub world: WorldParams,
    pub filter: FilterConfig,
    pub sensor_model: SensorModelConfig,
    pub measure: FuzzyMeasure,
    pub planner: PlannerParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            map: MapSource::default(),
            method: Method::Ours,
            sensors: None,
            policy: Policy::Nbs,
            pickers: 1,
            seeds: (0..10).collect(),
            duration: 900.0,
            fixed_rate: 0.1,
            world: WorldParams::default(),
            filter: FilterConfig::default(),
            sensor_model: SensorModelConfig::default(),
            measure: FuzzyMeasure::default(),
            planner: PlannerParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sensor_set(&self) -> SensorSet {
        self.sensors.unwrap_or_else(|| self.method.sensors())
    }

    /// Label written to the `method` column: the method, plus the policy
    /// when it is not the default one.
    pub fn label(&self) -> String {
        match self.policy {
            Policy::Nbs => self.method.as_str().to_string(),
            p => format!("{}+{}", self.method.as_str(), p.as_str()),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: &str| Err(SimError::Config(m.to_string()));
        if self.pickers == 0 {
            return err("pickers must be at least 1");
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return err("duration must be finite and >= 0");
        }
        if !(self.fixed_rate >= 0.0 && self.fixed_rate.is_finite()) {
            return err("fixed_rate must be finite and >= 0");
        }
        let w = &self.world;
        if !(w.dt > 0.0 && w.dt.is_finite()) {
            return err("world.dt must be positive");
        }
        for (name, period) in [("sensor_period", w.sensor_period), ("metrics_period", w.metrics_period)] {
            let ratio = period / w.dt;
            if !(period > 0.0 && (ratio - ratio.round()).abs() < 1e-9 && ratio.round() >= 1.0) {
                return Err(SimError::Config(format!(
                    "world.{name} must be a positive multiple of world.dt"
                )));
            }
        }
        let p = &w.pickers;
        if !(p.speed >= 0.0 && p.speeds.iter().all(|s| *s >= 0.0 && s.is_finite())) {
            return err("picker speeds must be >= 0");
        }
        if !(0.0..=1.0).contains(&p.p_reverse) {
            return err("pickers.p_reverse must lie in [0, 1]");
        }
        if !(p.t_reverse >= 0.0 && p.decision_period > 0.0) {
            return err("pickers.t_reverse must be >= 0 and decision_period > 0");
        }
        w.gps.validate()?;
        let r = &w.robot;
        if !(r.speed >= 0.0 && (0.0..=100.0).contains(&r.battery) && r.drain_per_meter >= 0.0) {
            return err("robot speed and drain must be >= 0, battery in [0, 100]");
        }
        if !(r.lidar_range > 0.0 && r.rfid_range > 0.0 && r.lidar_noise >= 0.0) {
            return err("robot sensor ranges must be positive");
        }
        if !(r.lidar_false_positive_rate >= 0.0 && r.replan_period > 0.0) {
            return err("robot false positive rate must be >= 0 and replan period > 0");
        }
        if !(self.sensor_model.gps_sigma > 0.0 && self.sensor_model.lidar_sigma > 0.0) {
            return err("sensor_model sigmas must be positive");
        }
        if !(self.sensor_model.rfid_range > 0.0 && self.sensor_model.velocity_window >= 2) {
            return err("sensor_model.rfid_range must be positive and velocity_window >= 2");
        }
        if !(self.planner.rfid_range > 0.0 && self.planner.sensing_time >= 0.0 && self.planner.drain_per_meter >= 0.0) {
            return err("planner ranges, times and drains must be non-negative");
        }
        self.filter.validate().map_err(|e| SimError::Config(e.to_string()))?;
        let sensors = self.sensor_set();
        if !(sensors.gps || sensors.lidar || sensors.rfid) {
            return err("at least one sensor must be enabled");
        }
        Ok(())
    }
}

/// Predefined comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteKind {
    /// Five trackers, one picker.
    Exp1Single,
    /// Two navigation policies, one picker.
    Exp2Policy,
    /// Full method and two ablations, three pickers.
    Exp3Multi,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 3] = [SuiteKind::Exp1Single, SuiteKind::Exp2Policy, SuiteKind::Exp3Multi];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteKind::Exp1Single => "exp1-single",
            SuiteKind::Exp2Policy => "exp2-policy",
            SuiteKind::Exp3Multi => "exp3-multi",
        }
    }

    /// Runs of the suite, derived from `base`.
    pub fn configs(self, base: &ExperimentConfig) -> Vec<ExperimentConfig> {
        let with = |method: Method, policy: Policy, pickers: usize| ExperimentConfig {
            method,
            policy,
            pickers,
            sensors: None,
            ..base.clone()
        };
        match self {
            SuiteKind::Exp1Single => [
                Method::KhanUnconnected,
                Method::KhanConnected,
                Method::LidarGps,
                Method::RfidGps,
                Method::Ours,
            ]
            .into_iter()
            .map(|m| with(m, Policy::Nbs, 1))
            .collect(),
            SuiteKind::Exp2Policy => [Policy::EstimatedNode, Policy::Nbs]
                .into_iter()
                .map(|p| with(Method::Ours, p, 1))
                .collect(),
            SuiteKind::Exp3Multi => [Method::Ours, Method::NoMonitor, Method::ConstantSpeed]
                .into_iter()
                .map(|m| with(m, Policy::Nbs, 3))
                .collect(),
        }
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SuiteKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            SimError::Config(format!(
                "unknown suite `{s}`; valid suites: {}",
                valid_list(&SuiteKind::ALL, SuiteKind::as_str)
            ))
        })
    }
}
