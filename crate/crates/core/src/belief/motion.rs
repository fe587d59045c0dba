//! Edge-constrained motion model of a particle.
//!
//! A particle sitting on node `q` with velocity `v` and dwell time `tau`
//! leaves `q` along edge `k` with an un-normalized probability
//! `1 - exp(lambda_k * tau)`, where
//!
//! ```text
//! lambda_k = 2 ln(1/2) * max(0, v . dir_k) / len_k
//! ```
//!
//! makes that probability exactly 1/2 when the particle has spent the time
//! needed to cover half of the edge at its projected speed. The per-edge
//! probabilities are mixed with weights `b_k = max(0, v . dir_k)`, so edges
//! pointing against the velocity never contribute.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::topology::Edge;

/// Self-calibrating jump rate for an edge of length `length` and a velocity
/// whose scalar projection on the edge is `projection`. Always `<= 0`.
pub fn jump_rate(projection: f64, length: f64) -> f64 {
    2.0 * 0.5f64.ln() * projection.max(0.0) / length
}

/// Dwell time at which the un-normalized jump probability reaches 1/2.
pub fn midpoint_time(projection: f64, length: f64) -> f64 {
    length / (2.0 * projection.max(0.0))
}

/// Rule used to pick the destination once a particle has decided to jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DestinationRule {
    /// Destination `k` with probability proportional to its term
    /// `b_k (1 - exp(lambda_k tau))` of the jump mixture, so the two stages
    /// compose into a single transition distribution.
    #[default]
    JumpWeighted,
    /// Softmax of `exp(lambda_k tau)` over all neighbors, as literally
    /// written. Favors neighbors with the smallest forward projection.
    Softmax,
}

/// Motion hypothesis used by the prediction step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MotionModel {
    /// Velocity-dependent rate per edge.
    Adaptive { destination: DestinationRule },
    /// One fixed rate for every edge and no velocity: jump with probability
    /// `1 - exp(-rate * tau)`, uniform destination.
    FixedRate { rate: f64 },
}

impl Default for MotionModel {
    fn default() -> Self {
        MotionModel::Adaptive {
            destination: DestinationRule::default(),
        }
    }
}

impl MotionModel {
    pub fn uses_velocity(&self) -> bool {
        matches!(self, MotionModel::Adaptive { .. })
    }
}

/// Jump probability and destination distribution for one particle state.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub jump_probability: f64,
    /// Conditional destination probabilities, aligned with the edge slice.
    /// Empty when `jump_probability` is zero.
    pub destinations: Vec<f64>,
}

impl Transition {
    fn stay() -> Self {
        Self {
            jump_probability: 0.0,
            destinations: Vec::new(),
        }
    }
}

/// Evaluates the transition law for a particle on a node with outgoing
/// `edges`.
pub fn transition(model: &MotionModel, edges: &[Edge], velocity: Vec2, dwell: f64) -> Transition {
    if edges.is_empty() {
        return Transition::stay();
    }
    match *model {
        MotionModel::FixedRate { rate } => {
            let p = 1.0 - (-rate * dwell).exp();
            if p <= 0.0 {
                return Transition::stay();
            }
            Transition {
                jump_probability: p,
                destinations: vec![1.0 / edges.len() as f64; edges.len()],
            }
        }
        MotionModel::Adaptive { destination } => {
            let mut total_b = 0.0;
            let mut mixture = 0.0;
            let mut terms = Vec::with_capacity(edges.len());
            let mut rates = Vec::with_capacity(edges.len());
            for e in edges {
                let projection = velocity.dot(e.direction);
                let b = projection.max(0.0);
                let rate = jump_rate(projection, e.length);
                let term = b * (1.0 - (rate * dwell).exp());
                total_b += b;
                mixture += term;
                terms.push(term);
                rates.push(rate);
            }
            // No edge has a positive projection: the particle stays.
            if total_b <= 0.0 || mixture <= 0.0 {
                return Transition::stay();
            }
            let destinations = match destination {
                DestinationRule::JumpWeighted => terms.iter().map(|t| t / mixture).collect(),
                DestinationRule::Softmax => softmax(rates.iter().map(|r| r * dwell)),
            };
            Transition {
                jump_probability: (mixture / total_b).clamp(0.0, 1.0),
                destinations,
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let max = logits.clone().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
