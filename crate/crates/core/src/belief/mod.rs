//! Topological particle filter.
//!
//! One [`BeliefFilter`] tracks one person. Particles live on map nodes and
//! carry a velocity and a dwell time; the motion model in [`motion`] moves
//! them only along edges, except for the teleport noise applied after
//! resampling while `pr_j > 0`.
//!
//! Each observation runs the cycle
//!
//! 1. initialize from the observation on the first call,
//! 2. predict to the observation timestamp,
//! 3. compare the predicted node distribution with the observation using the
//!    Jensen-Shannon distance; a distance above `jsd_threshold` on an
//!    identifying observation re-initializes the particles from it and
//!    enables teleporting,
//! 4. weight and compute the topological mass of each node,
//! 5. resample with noise,
//! 6. disable teleporting once the normalized entropy of the particle
//!    distribution drops below `entropy_threshold`.

pub mod divergence;
pub mod motion;

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::sensors::{Observation, ObservationError, SensorKind};
use crate::topology::{NodeId, TopologicalMap};

pub use divergence::{jsd, normalized_entropy, DistributionError, NodeDistribution};
pub use motion::{jump_rate, midpoint_time, transition, DestinationRule, MotionModel, Transition};

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("invalid filter configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error("filter has not been initialized")]
    Uninitialized,
    #[error("time went backwards: {now} < {last}")]
    TimeWentBackwards { now: f64, last: f64 },
    #[error("weights must be finite and non-negative (entry {0})")]
    InvalidWeight(usize),
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
}

/// Hypothesis about the tracked person.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub node: NodeId,
    pub velocity: Vec2,
    /// Seconds spent on `node`.
    pub dwell: f64,
}

/// Node and velocity weighting factors for one sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorGains {
    pub node: f64,
    pub velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainTable {
    pub gps: SensorGains,
    pub lidar: SensorGains,
    pub rfid: SensorGains,
}

impl Default for GainTable {
    fn default() -> Self {
        Self {
            gps: SensorGains { node: 1.0, velocity: 1.0 },
            lidar: SensorGains { node: 0.25, velocity: 0.0 },
            rfid: SensorGains { node: 1.0, velocity: 0.0 },
        }
    }
}

impl GainTable {
    pub fn get(&self, kind: SensorKind) -> SensorGains {
        match kind {
            SensorKind::Gps => self.gps,
            SensorKind::Lidar => self.lidar,
            SensorKind::Rfid => self.rfid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResamplingScheme {
    /// Independent draws from the normalized weights.
    #[default]
    Multinomial,
    /// One uniform offset, evenly spaced pointers.
    Systematic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub particle_count: usize,
    /// Divisor of the velocity update gain.
    pub velocity_window: f64,
    pub jsd_threshold: f64,
    pub entropy_threshold: f64,
    pub init_velocity_mean: f64,
    pub init_velocity_variance: f64,
    pub noise_velocity_mean: f64,
    pub noise_velocity_variance: f64,
    pub init_dwell_min: f64,
    pub init_dwell_max: f64,
    pub noise_dwell_min: f64,
    pub noise_dwell_max: f64,
    pub gains: GainTable,
    /// Teleport probability set when the divergence monitor re-initializes.
    pub teleport_probability: f64,
    /// Teleport probability before any re-initialization.
    pub initial_teleport_probability: f64,
    /// Enables the divergence and entropy monitors.
    pub monitors: bool,
    /// Predict-only cadence when no observation arrives, Hz.
    pub prediction_rate: f64,
    /// Floor on the spread of the speed likelihood, m/s.
    pub min_velocity_sigma: f64,
    pub resampling: ResamplingScheme,
    pub motion: MotionModel,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particle_count: 300,
            velocity_window: 10.0,
            jsd_threshold: 0.975,
            entropy_threshold: 0.6,
            init_velocity_mean: 0.0,
            init_velocity_variance: 5e-2,
            noise_velocity_mean: 0.0,
            noise_velocity_variance: 5e-4,
            init_dwell_min: 0.0,
            init_dwell_max: 1.0,
            noise_dwell_min: -0.1,
            noise_dwell_max: 0.1,
            gains: GainTable::default(),
            teleport_probability: 1e-3,
            initial_teleport_probability: 0.0,
            monitors: true,
            prediction_rate: 0.25,
            min_velocity_sigma: 0.05,
            resampling: ResamplingScheme::default(),
            motion: MotionModel::default(),
            seed: 0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        let err = |msg: String| Err(FilterError::Config(msg));
        if self.particle_count == 0 {
            return err("particle_count must be positive".into());
        }
        for (name, v) in [
            ("jsd_threshold", self.jsd_threshold),
            ("entropy_threshold", self.entropy_threshold),
            ("teleport_probability", self.teleport_probability),
            ("initial_teleport_probability", self.initial_teleport_probability),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, v) in [
            ("init_velocity_variance", self.init_velocity_variance),
            ("noise_velocity_variance", self.noise_velocity_variance),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return err(format!("{name} must be a finite non-negative variance, got {v}"));
            }
        }
        if !(self.velocity_window > 0.0) {
            return err("velocity_window must be positive".into());
        }
        if !(self.prediction_rate > 0.0) {
            return err("prediction_rate must be positive".into());
        }
        if !(self.min_velocity_sigma > 0.0) {
            return err("min_velocity_sigma must be positive".into());
        }
        if !(self.init_dwell_min <= self.init_dwell_max && self.init_dwell_min >= 0.0) {
            return err("init dwell bounds must satisfy 0 <= min <= max".into());
        }
        if !(self.noise_dwell_min <= self.noise_dwell_max) {
            return err("noise dwell bounds must satisfy min <= max".into());
        }
        if let MotionModel::FixedRate { rate } = self.motion {
            if !(rate >= 0.0 && rate.is_finite()) {
                return err(format!("fixed jump rate must be non-negative, got {rate}"));
            }
        }
        Ok(())
    }

    /// Seconds between predict-only steps.
    pub fn prediction_period(&self) -> f64 {
        1.0 / self.prediction_rate
    }
}

/// Per-particle weights and the resulting topological masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Weighting {
    pub weights: Vec<f64>,
    /// Sum of particle weights per node.
    pub masses: Vec<f64>,
    pub estimate: NodeId,
    /// All raw weights were zero and uniform weights were substituted.
    pub degenerate: bool,
}

/// Snapshot of one filter cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub timestamp: f64,
    pub sensor: SensorKind,
    pub estimate: NodeId,
    /// Distance between the predicted particle distribution and the
    /// observation.
    pub jsd: f64,
    /// Normalized entropy of the resampled particle distribution.
    pub entropy: f64,
    /// Teleport probability after the cycle.
    pub teleport_probability: f64,
    pub reinitialized: bool,
    pub degenerate_weights: bool,
    /// Up to five heaviest nodes with their normalized mass.
    pub top_masses: Vec<(NodeId, f64)>,
}

#[derive(Debug, Clone)]
pub struct BeliefFilter {
    map: Arc<TopologicalMap>,
    config: FilterConfig,
    particles: Vec<Particle>,
    teleport: f64,
    last_timestamp: Option<f64>,
    estimate: Option<NodeId>,
    /// Share of the total mass on the estimated node at the last estimate.
    confidence: f64,
    rng: ChaCha8Rng,
}

impl BeliefFilter {
    pub fn new(map: Arc<TopologicalMap>, config: FilterConfig) -> Result<Self, FilterError> {
        config.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            teleport: config.initial_teleport_probability,
            particles: Vec::with_capacity(config.particle_count),
            last_timestamp: None,
            estimate: None,
            confidence: 0.0,
            map,
            config,
        })
    }

    pub fn map(&self) -> &TopologicalMap {
        &self.map
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Replaces the particle set, e.g. to script a scenario. The count must
    /// match the configuration.
    pub fn set_particles(&mut self, particles: Vec<Particle>, timestamp: f64) -> Result<(), FilterError> {
        if particles.len() != self.config.particle_count {
            return Err(FilterError::WeightCount {
                expected: self.config.particle_count,
                got: particles.len(),
            });
        }
        self.particles = particles;
        self.last_timestamp = Some(timestamp);
        Ok(())
    }

    pub fn is_initialized(&self) -> bool {
        !self.particles.is_empty()
    }

    pub fn teleport_probability(&self) -> f64 {
        self.teleport
    }

    pub fn set_teleport_probability(&mut self, p: f64) {
        self.teleport = p;
    }

    pub fn last_timestamp(&self) -> Option<f64> {
        self.last_timestamp
    }

    pub fn estimate(&self) -> Option<NodeId> {
        self.estimate
    }

    /// Fraction of the mass on the current estimate.
    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    /// Samples a fresh particle set from the observation. Non-identifying
    /// observations are replaced by a uniform distribution over the map.
    pub fn initialize(&mut self, obs: &Observation) -> Result<(), FilterError> {
        obs.check_against(&self.map)?;
        let n = self.map.len();
        let nodes: Box<dyn Fn(&mut ChaCha8Rng) -> usize> = if obs.is_identifying() {
            let index = WeightedIndex::new(obs.likelihood())
                .map_err(|_| FilterError::Observation(ObservationError::EmptyLikelihood))?;
            Box::new(move |rng| index.sample(rng))
        } else {
            Box::new(move |rng| rng.random_range(0..n))
        };
        let velocity = normal(self.config.init_velocity_mean, self.config.init_velocity_variance);
        let dwell = uniform(self.config.init_dwell_min, self.config.init_dwell_max);

        self.particles.clear();
        for _ in 0..self.config.particle_count {
            let node = NodeId(nodes(&mut self.rng));
            let v = Vec2::new(velocity.sample(&mut self.rng), velocity.sample(&mut self.rng));
            let tau = dwell.sample(&mut self.rng);
            self.particles.push(Particle {
                node,
                velocity: v,
                dwell: tau,
            });
        }
        if self.last_timestamp.is_none() {
            self.last_timestamp = Some(obs.timestamp);
        }
        Ok(())
    }

    /// Moves every particle forward to time `now`.
    pub fn predict(&mut self, now: f64) -> Result<(), FilterError> {
        let last = self.last_timestamp.ok_or(FilterError::Uninitialized)?;
        if now < last {
            return Err(FilterError::TimeWentBackwards { now, last });
        }
        let dt = now - last;
        let model = self.config.motion;
        let window = self.config.velocity_window;
        for p in &mut self.particles {
            let edges = self.map.edges(p.node);
            let t = transition(&model, edges, p.velocity, p.dwell);
            let jumped = t.jump_probability > 0.0 && self.rng.random::<f64>() < t.jump_probability;
            if !jumped {
                p.dwell += dt;
                continue;
            }
            let k = sample_index(&t.destinations, self.rng.random::<f64>());
            let edge = edges[k];
            if model.uses_velocity() {
                let dwell = p.dwell + dt;
                if dwell > 0.0 {
                    let observed = edge.direction * (edge.length / dwell);
                    let gain = t.jump_probability * t.destinations[k];
                    p.velocity += (observed - p.velocity) * (gain / window);
                }
            }
            p.node = edge.to;
            p.dwell = 0.0;
        }
        self.last_timestamp = Some(now);
        Ok(())
    }

    /// Empirical distribution of particles over nodes.
    pub fn node_distribution(&self) -> Result<NodeDistribution, FilterError> {
        if self.particles.is_empty() {
            return Err(FilterError::Uninitialized);
        }
        Ok(NodeDistribution::from_masses(self.occupancy()).expect("non-empty particle set"))
    }

    fn occupancy(&self) -> Vec<f64> {
        let mut counts = vec![0.0; self.map.len()];
        for p in &self.particles {
            counts[p.node.0] += 1.0;
        }
        counts
    }

    /// Scores every particle against the observation.
    pub fn weight(&self, obs: &Observation) -> Result<Weighting, FilterError> {
        if self.particles.is_empty() {
            return Err(FilterError::Uninitialized);
        }
        obs.check_against(&self.map)?;
        let gains = self.config.gains.get(obs.sensor);
        let likelihood = obs.likelihood();
        let velocity_term = match obs.velocity {
            Some(vs) if gains.velocity != 0.0 && self.config.motion.uses_velocity() => {
                let speed = vs.norm();
                let sigma = (speed / 2.0).max(self.config.min_velocity_sigma);
                Some((vs, speed, sigma))
            }
            _ => None,
        };

        let mut weights: Vec<f64> = self
            .particles
            .iter()
            .map(|p| {
                let wq = gains.node * likelihood[p.node.0];
                let wv = velocity_term.map_or(0.0, |(vs, speed, sigma)| {
                    let g = gaussian_density(p.velocity.norm(), speed, sigma);
                    let cos = p.velocity.cos_angle(vs).unwrap_or(0.0);
                    gains.velocity * 0.25 * (g + 0.5 * (cos + 1.0))
                });
                wq + wv
            })
            .collect();

        let total: f64 = weights.iter().sum();
        let degenerate = !(total > 0.0 && total.is_finite());
        if degenerate {
            log::debug!(
                "all particle weights vanished for {} observation at t={:.2}; using uniform weights",
                obs.sensor,
                obs.timestamp
            );
            weights.iter_mut().for_each(|w| *w = 1.0);
        }

        let mut masses = vec![0.0; self.map.len()];
        for (p, w) in self.particles.iter().zip(&weights) {
            masses[p.node.0] += w;
        }
        let estimate = argmax(&masses);
        Ok(Weighting {
            weights,
            masses,
            estimate,
            degenerate,
        })
    }

    /// Draws a new particle set from the weights, then applies teleport,
    /// velocity and dwell noise.
    pub fn resample(&mut self, weights: &[f64]) -> Result<(), FilterError> {
        if weights.len() != self.particles.len() {
            return Err(FilterError::WeightCount {
                expected: self.particles.len(),
                got: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(FilterError::InvalidWeight(i));
        }
        let total: f64 = weights.iter().sum();
        let uniform_weights;
        let weights = if total > 0.0 {
            weights
        } else {
            uniform_weights = vec![1.0; weights.len()];
            &uniform_weights
        };

        let picks = match self.config.resampling {
            ResamplingScheme::Multinomial => multinomial(weights, self.particles.len(), &mut self.rng),
            ResamplingScheme::Systematic => systematic(weights, self.particles.len(), &mut self.rng),
        };
        let mut next: Vec<Particle> = picks.into_iter().map(|i| self.particles[i]).collect();

        let n = self.map.len();
        let velocity = normal(self.config.noise_velocity_mean, self.config.noise_velocity_variance);
        let dwell = uniform(self.config.noise_dwell_min, self.config.noise_dwell_max);
        for p in &mut next {
            if self.teleport > 0.0 && self.rng.random::<f64>() < self.teleport {
                p.node = NodeId(self.rng.random_range(0..n));
            }
            p.velocity += Vec2::new(velocity.sample(&mut self.rng), velocity.sample(&mut self.rng));
            p.dwell = (p.dwell + dwell.sample(&mut self.rng)).max(0.0);
        }
        self.particles = next;
        Ok(())
    }

    /// One full observation cycle.
    pub fn update(&mut self, obs: &Observation) -> Result<UpdateReport, FilterError> {
        obs.check_against(&self.map)?;
        if !self.is_initialized() {
            self.initialize(obs)?;
        }
        self.predict(obs.timestamp)?;

        let observed = NodeDistribution::from_masses(obs.likelihood().to_vec())
            .map_err(|_| FilterError::Observation(ObservationError::EmptyLikelihood))?;
        let predicted = self.node_distribution()?;
        let distance = jsd(&predicted, &observed).expect("same map");
        let mut reinitialized = false;
        if self.config.monitors && distance > self.config.jsd_threshold && obs.is_identifying() {
            self.initialize(obs)?;
            self.teleport = self.config.teleport_probability;
            reinitialized = true;
        }

        let weighting = self.weight(obs)?;
        self.resample(&weighting.weights)?;
        let entropy = normalized_entropy(&self.node_distribution()?);
        if self.config.monitors && entropy < self.config.entropy_threshold {
            self.teleport = 0.0;
        }

        let total: f64 = weighting.masses.iter().sum();
        self.estimate = Some(weighting.estimate);
        self.confidence = weighting.masses[weighting.estimate.0] / total;
        Ok(UpdateReport {
            timestamp: obs.timestamp,
            sensor: obs.sensor,
            estimate: weighting.estimate,
            jsd: distance,
            entropy,
            teleport_probability: self.teleport,
            reinitialized,
            degenerate_weights: weighting.degenerate,
            top_masses: top_k(&weighting.masses, total, 5),
        })
    }

    /// Prediction without an observation; the estimate is the most occupied
    /// node.
    pub fn predict_only(&mut self, now: f64) -> Result<NodeId, FilterError> {
        if !self.is_initialized() {
            return Err(FilterError::Uninitialized);
        }
        self.predict(now)?;
        let counts = self.occupancy();
        let estimate = argmax(&counts);
        self.estimate = Some(estimate);
        self.confidence = counts[estimate.0] / self.particles.len() as f64;
        Ok(estimate)
    }
}

fn normal(mean: f64, variance: f64) -> Normal<f64> {
    Normal::new(mean, variance.sqrt()).expect("validated variance")
}

fn uniform(lo: f64, hi: f64) -> Uniform<f64> {
    Uniform::new_inclusive(lo, hi).expect("validated bounds")
}

/// Gaussian probability density with the given mean and standard deviation.
pub fn gaussian_density(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Index of the largest entry; ties go to the lowest index.
fn argmax(values: &[f64]) -> NodeId {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    NodeId(best)
}

fn top_k(masses: &[f64], total: f64, k: usize) -> Vec<(NodeId, f64)> {
    let mut order: Vec<usize> = (0..masses.len()).filter(|&i| masses[i] > 0.0).collect();
    order.sort_by(|&a, &b| masses[b].total_cmp(&masses[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.into_iter().map(|i| (NodeId(i), masses[i] / total)).collect()
}

/// Inverse-CDF lookup of `u` in `[0, 1)` over probabilities summing to one.
fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` a hair below one: take the last non-zero entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn multinomial(weights: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let index = WeightedIndex::new(weights).expect("positive total weight");
    (0..count).map(|_| index.sample(rng)).collect()
}

fn systematic(weights: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let step = total / count as f64;
    let mut pointer = rng.random::<f64>() * step;
    let mut picks = Vec::with_capacity(count);
    let mut acc = weights[0];
    let mut i = 0;
    for _ in 0..count {
        while pointer >= acc && i + 1 < weights.len() {
            i += 1;
            acc += weights[i];
        }
        picks.push(i);
        pointer += step;
    }
    picks
}

#[cfg(test)]
mod tests;
