use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::belief::{normalized_entropy, BeliefFilter};
use crate::geometry::{segments_intersect, Vec2};
use crate::planner::{estimated_node_policy, select_next_pose, WorldSnapshot};
use crate::sensors::{
    gps_to_observation, lidar_to_observation, rfid_to_observation, Observation, TargetId, VelocityEstimator,
};
use crate::topology::{NodeId, TopologicalMap};

use super::config::{ExperimentConfig, MapSource, Policy, SensorSet};
use super::gps::GpsNoiseModel;
use super::metrics::{compute_metrics, MetricsRecord};
use super::picker::PickerAgent;
use super::robot::RobotAgent;
use super::route::PickingRoute;
use super::SimError;

/// Map, route and default robot start shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct Environment {
    pub map: Arc<TopologicalMap>,
    pub route: Arc<PickingRoute>,
    pub robot_start: NodeId,
    /// Segments that block the leg detector's line of sight.
    pub occluders: Vec<(Vec2, Vec2)>,
}

impl Environment {
    pub fn build(source: &MapSource) -> Result<Self, SimError> {
        match source {
            MapSource::Generate(layout) => {
                let pm = layout.build()?;
                let route = PickingRoute::new(&pm.map, pm.picking_route.clone())?;
                Ok(Self {
                    robot_start: pm.headers[0],
                    occluders: pm.bed_segments(),
                    map: Arc::new(pm.map),
                    route: Arc::new(route),
                })
            }
            MapSource::File { path, route } => {
                let file = std::fs::File::open(path)?;
                let map = TopologicalMap::load(std::io::BufReader::new(file))?;
                let route = PickingRoute::new(&map, route.clone())?;
                Ok(Self {
                    robot_start: route.nodes()[0],
                    occluders: Vec::new(),
                    map: Arc::new(map),
                    route: Arc::new(route),
                })
            }
        }
    }
}

// Stream ids keep every random source independent of the others, so that
// enabling a sensor never changes how the pickers move.
const PICKER_STREAM: u64 = 0x100;
const GPS_STREAM: u64 = 0x200;
const LIDAR_STREAM: u64 = 0x300;
const FILTER_STREAM: u64 = 0x400;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Observation together with the filters that receive it.
#[derive(Debug, Clone)]
pub struct SensorEvent {
    /// Owning picker for identifying readings, `None` for broadcast.
    pub target: Option<usize>,
    pub observation: Observation,
}

/// One simulation run.
pub struct World {
    env: Environment,
    cfg: ExperimentConfig,
    seed: u64,
    label: String,
    sensors: SensorSet,
    tick: u64,
    sensor_ticks: u64,
    metrics_ticks: u64,
    pickers: Vec<PickerAgent>,
    gps: Vec<GpsNoiseModel>,
    velocity: Vec<VelocityEstimator>,
    last_fix: Vec<Option<f64>>,
    filters: Vec<BeliefFilter>,
    last_event: Vec<f64>,
    last_jsd: Vec<f64>,
    robot: RobotAgent,
    next_replan: f64,
    lidar_rng: ChaCha8Rng,
}

impl World {
    pub fn new(cfg: &ExperimentConfig, env: &Environment, seed: u64) -> Result<Self, SimError> {
        let w = &cfg.world;
        let n = cfg.pickers;
        let spacing = env.route.length() / n as f64;
        let pickers = (0..n)
            .map(|i| {
                let rng = stream(seed, PICKER_STREAM + i as u64);
                PickerAgent::new(i, env.route.clone(), i as f64 * spacing, &w.pickers, rng)
            })
            .collect();
        let gps = (0..n)
            .map(|i| GpsNoiseModel::new(w.gps.clone(), stream(seed, GPS_STREAM + i as u64)))
            .collect();
        let base = cfg.method.filter_config(&cfg.filter, cfg.fixed_rate);
        let filters = (0..n)
            .map(|i| {
                let mut fc = base.clone();
                fc.seed = stream(seed, FILTER_STREAM + i as u64).random();
                BeliefFilter::new(env.map.clone(), fc)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let start = w.robot.start.unwrap_or(env.robot_start);
        if !env.map.contains(start) {
            return Err(SimError::Config(format!("robot start node {start} is not on the map")));
        }
        let round = |period: f64| (period / w.dt).round() as u64;
        Ok(Self {
            env: env.clone(),
            cfg: cfg.clone(),
            seed,
            label: cfg.label(),
            sensors: cfg.sensor_set(),
            tick: 0,
            sensor_ticks: round(w.sensor_period),
            metrics_ticks: round(w.metrics_period),
            pickers,
            gps,
            velocity: (0..n).map(|_| VelocityEstimator::new(cfg.sensor_model.velocity_window)).collect(),
            last_fix: vec![None; n],
            filters,
            last_event: vec![0.0; n],
            last_jsd: vec![0.0; n],
            robot: RobotAgent::new(&env.map, start, &w.robot),
            next_replan: 0.0,
            lidar_rng: stream(seed, LIDAR_STREAM),
        })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.world.dt
    }

    pub fn map(&self) -> &TopologicalMap {
        &self.env.map
    }

    pub fn pickers(&self) -> &[PickerAgent] {
        &self.pickers
    }

    pub fn gps(&self) -> &[GpsNoiseModel] {
        &self.gps
    }

    pub fn filters(&self) -> &[BeliefFilter] {
        &self.filters
    }

    pub fn robot(&self) -> &RobotAgent {
        &self.robot
    }

    /// Runs the tick at the current time: sensing, filtering, planning and,
    /// when due, metric rows.
    fn process_tick(&mut self) -> Result<Vec<MetricsRecord>, SimError> {
        let t = self.time();
        if self.tick % self.sensor_ticks == 0 {
            for event in self.emit_sensor_events()? {
                match event.target {
                    Some(i) => self.update(i, &event.observation)?,
                    None => {
                        for i in 0..self.filters.len() {
                            self.update(i, &event.observation)?;
                        }
                    }
                }
            }
        }
        let period = self.cfg.filter.prediction_period();
        for i in 0..self.filters.len() {
            if self.filters[i].is_initialized() && t - self.last_event[i] >= period - 1e-9 {
                self.filters[i].predict_only(t)?;
                self.last_event[i] = t;
            }
        }
        if t >= self.next_replan - 1e-9 {
            self.replan()?;
        }
        if self.tick % self.metrics_ticks == 0 {
            Ok(self.metrics())
        } else {
            Ok(Vec::new())
        }
    }

    /// Moves the clock forward one tick.
    fn advance(&mut self) -> Result<(), SimError> {
        let dt = self.cfg.world.dt;
        self.tick += 1;
        for p in &mut self.pickers {
            p.step(dt);
        }
        for g in &mut self.gps {
            g.advance(dt);
        }
        let battery = self.robot.battery;
        let arrived = self.robot.step(&self.env.map, dt);
        if self.robot.battery > battery || !(0.0..=100.0).contains(&self.robot.battery) {
            return Err(SimError::Invariant {
                time: self.time(),
                what: format!("battery went from {battery} to {}", self.robot.battery),
            });
        }
        if arrived {
            let t = self.time();
            self.next_replan = self.next_replan.min(t + self.cfg.planner.sensing_time);
        }
        Ok(())
    }

    fn update(&mut self, i: usize, obs: &Observation) -> Result<(), SimError> {
        let report = self.filters[i].update(obs)?;
        let expected = self.filters[i].config().particle_count;
        if self.filters[i].particles().len() != expected {
            return Err(SimError::Invariant {
                time: obs.timestamp,
                what: format!("filter {i} holds {} particles, expected {expected}", self.filters[i].particles().len()),
            });
        }
        self.last_jsd[i] = report.jsd;
        self.last_event[i] = obs.timestamp;
        Ok(())
    }

    /// Sensor readings available at the current time.
    pub fn emit_sensor_events(&mut self) -> Result<Vec<SensorEvent>, SimError> {
        let t = self.time();
        let map = &self.env.map;
        let sm = &self.cfg.sensor_model;
        let rp = &self.cfg.world.robot;
        let mut events = Vec::new();

        if self.sensors.gps {
            let stale_after = 2.5 * self.cfg.world.sensor_period;
            for (i, picker) in self.pickers.iter().enumerate() {
                let Some(fix) = self.gps[i].fix(picker.position()) else { continue };
                if self.last_fix[i].is_some_and(|last| t - last > stale_after) {
                    self.velocity[i].clear();
                }
                self.last_fix[i] = Some(t);
                let obs = gps_to_observation(map, sm, fix, TargetId(i as u32), &mut self.velocity[i], t)?;
                events.push(SensorEvent {
                    target: Some(i),
                    observation: obs,
                });
            }
        }

        let robot = self.robot.position;
        if self.sensors.rfid {
            for (i, picker) in self.pickers.iter().enumerate() {
                if picker.position().distance(robot) <= rp.rfid_range {
                    let obs = rfid_to_observation(map, sm, robot, TargetId(i as u32), t)?;
                    events.push(SensorEvent {
                        target: Some(i),
                        observation: obs,
                    });
                }
            }
        }

        if self.sensors.lidar {
            let noise = Normal::new(0.0, rp.lidar_noise).expect("validated noise");
            let mut detections = Vec::new();
            for picker in &self.pickers {
                let p = picker.position();
                let blocked = rp.lidar_occlusion
                    && self.env.occluders.iter().any(|&(a, b)| segments_intersect(robot, p, a, b));
                if p.distance(robot) <= rp.lidar_range && !blocked {
                    let jitter = Vec2::new(noise.sample(&mut self.lidar_rng), noise.sample(&mut self.lidar_rng));
                    detections.push(p + jitter);
                }
            }
            let mean = rp.lidar_false_positive_rate * self.cfg.world.sensor_period;
            if mean > 0.0 {
                let spurious = Poisson::new(mean).expect("positive rate").sample(&mut self.lidar_rng) as usize;
                for _ in 0..spurious {
                    let r = rp.lidar_range * self.lidar_rng.random::<f64>().sqrt();
                    let theta = std::f64::consts::TAU * self.lidar_rng.random::<f64>();
                    detections.push(robot + Vec2::new(r * theta.cos(), r * theta.sin()));
                }
            }
            for d in detections {
                events.push(SensorEvent {
                    target: None,
                    observation: lidar_to_observation(map, sm, d, t)?,
                });
            }
        }
        Ok(events)
    }

    fn replan(&mut self) -> Result<(), SimError> {
        let t = self.time();
        if !self.filters.iter().any(|f| f.estimate().is_some()) {
            self.next_replan = t + self.cfg.world.sensor_period;
            return Ok(());
        }
        let map = &self.env.map;
        let goal = match self.cfg.policy {
            Policy::EstimatedNode => estimated_node_policy(&self.filters)?,
            Policy::Nbs => {
                let mut belief = vec![0.0; map.len()];
                for f in self.filters.iter().filter(|f| f.is_initialized()) {
                    for (b, p) in belief.iter_mut().zip(f.node_distribution()?.probabilities()) {
                        *b += p;
                    }
                }
                let snapshot = WorldSnapshot {
                    robot_node: self.robot.anchor(),
                    battery: self.robot.battery,
                    belief,
                };
                let candidates: Vec<NodeId> = map.node_ids().collect();
                select_next_pose(map, &candidates, &snapshot, &self.cfg.measure, &self.cfg.planner)?.node
            }
        };
        self.robot.set_goal(map, goal);
        self.next_replan = t + self.cfg.world.robot.replan_period;
        if self.robot.is_idle() {
            self.next_replan = self.next_replan.min(t + self.cfg.planner.sensing_time.max(self.cfg.world.dt));
        }
        Ok(())
    }

    /// Error rows for every picker whose filter has an estimate.
    pub fn metrics(&self) -> Vec<MetricsRecord> {
        let t = self.time();
        self.pickers
            .iter()
            .zip(&self.filters)
            .enumerate()
            .filter_map(|(i, (picker, filter))| {
                let estimate = filter.estimate()?;
                let (euclidean, hops) = compute_metrics(&self.env.map, estimate, picker.position());
                let entropy = filter.node_distribution().map(|d| normalized_entropy(&d)).unwrap_or(1.0);
                Some(MetricsRecord {
                    t,
                    picker_id: i,
                    method: self.label.clone(),
                    seed: self.seed,
                    euclidean_err_m: euclidean,
                    topo_err_hops: hops,
                    estimate_node: estimate,
                    jsd: self.last_jsd[i],
                    entropy,
                    pr_j: filter.teleport_probability(),
                })
            })
            .collect()
    }

    /// Simulates `duration` seconds and returns the metric rows.
    pub fn run(mut self, duration: f64) -> Result<Vec<MetricsRecord>, SimError> {
        let ticks = (duration / self.cfg.world.dt).round() as u64;
        let mut records = Vec::new();
        for k in 0..ticks {
            if k > 0 {
                self.advance()?;
            }
            records.extend(self.process_tick()?);
        }
        Ok(records)
    }
}
