use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

use super::route::PickingRoute;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PickerParams {
    /// Walking speed, m/s.
    pub speed: f64,
    /// Optional per-picker speeds overriding `speed`.
    pub speeds: Vec<f64>,
    /// Chance of turning around, evaluated once per decision period.
    pub p_reverse: f64,
    /// How long a turn-around lasts, seconds.
    pub t_reverse: f64,
    pub decision_period: f64,
}

impl Default for PickerParams {
    fn default() -> Self {
        Self {
            speed: 0.8,
            speeds: Vec::new(),
            p_reverse: 0.1,
            t_reverse: 60.0,
            decision_period: 1.0,
        }
    }
}

impl PickerParams {
    pub fn speed_of(&self, picker: usize) -> f64 {
        self.speeds.get(picker).copied().unwrap_or(self.speed)
    }
}

/// A person walking the picking route.
///
/// Pickers go forward along the serpentine route. At every decision step
/// taken while walking forward they turn around with probability
/// `p_reverse` and walk back for `t_reverse` seconds.
#[derive(Debug, Clone)]
pub struct PickerAgent {
    pub id: usize,
    route: Arc<PickingRoute>,
    /// Arc length along the route.
    arc: f64,
    pub speed: f64,
    /// Seconds of backward walking left.
    reverse_timer: f64,
    until_decision: f64,
    decisions: u64,
    reversals: u64,
    params: PickerParams,
    rng: ChaCha8Rng,
}

impl PickerAgent {
    pub fn new(id: usize, route: Arc<PickingRoute>, start_arc: f64, params: &PickerParams, rng: ChaCha8Rng) -> Self {
        let arc = route.wrap(start_arc);
        Self {
            id,
            route,
            arc,
            speed: params.speed_of(id),
            reverse_timer: 0.0,
            until_decision: params.decision_period,
            decisions: 0,
            reversals: 0,
            params: params.clone(),
            rng,
        }
    }

    pub fn position(&self) -> Vec2 {
        self.route.point_at(self.arc)
    }

    pub fn arc(&self) -> f64 {
        self.arc
    }

    pub fn is_reversing(&self) -> bool {
        self.reverse_timer > 0.0
    }

    pub fn reverse_timer(&self) -> f64 {
        self.reverse_timer
    }

    /// Number of turn-around decisions taken and how many of them fired.
    pub fn decision_counts(&self) -> (u64, u64) {
        (self.decisions, self.reversals)
    }

    /// Current route segment as `(from, to)` in the walking direction.
    pub fn segment(&self) -> (crate::topology::NodeId, crate::topology::NodeId) {
        let (a, b) = self.route.segment(self.route.segment_at(self.arc));
        if self.is_reversing() {
            (b, a)
        } else {
            (a, b)
        }
    }

    /// Advances the picker by `dt` seconds.
    pub fn step(&mut self, dt: f64) {
        let mut left = dt;
        while left > 0.0 {
            let chunk = left.min(self.until_decision);
            let chunk = if self.is_reversing() { chunk.min(self.reverse_timer) } else { chunk };
            let sign = if self.is_reversing() { -1.0 } else { 1.0 };
            self.arc = self.route.wrap(self.arc + sign * self.speed * chunk);
            if self.is_reversing() {
                self.reverse_timer = (self.reverse_timer - chunk).max(0.0);
            }
            self.until_decision -= chunk;
            left -= chunk;
            if self.until_decision <= 1e-12 {
                self.until_decision = self.params.decision_period;
                if !self.is_reversing() {
                    self.decisions += 1;
                    if self.rng.random::<f64>() < self.params.p_reverse {
                        self.reversals += 1;
                        self.reverse_timer = self.params.t_reverse;
                    }
                }
            }
        }
    }
}
