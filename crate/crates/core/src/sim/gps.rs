use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

use super::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpsNoiseParams {
    /// Per-axis bias drawn once per receiver from `U(0, offset_max)`, metres.
    pub offset_max: f64,
    /// Standard deviation of the per-fix white noise, metres.
    pub white_std: f64,
    /// Stationary standard deviation of the per-axis drift, metres.
    pub drift_std: f64,
    /// Correlation time of the drift, seconds.
    pub drift_time_constant: f64,
    pub blackouts: bool,
    /// Blackout duration bounds, seconds.
    pub blackout_min: f64,
    pub blackout_max: f64,
    /// Bounds of the gap between the end of one blackout (or the start of the
    /// run) and the next onset, seconds.
    pub blackout_gap_min: f64,
    pub blackout_gap_max: f64,
}

impl Default for GpsNoiseParams {
    fn default() -> Self {
        Self {
            offset_max: 3.5,
            white_std: 0.1,
            drift_std: 2.5,
            drift_time_constant: 300.0,
            blackouts: true,
            blackout_min: 30.0,
            blackout_max: 60.0,
            blackout_gap_min: 120.0,
            blackout_gap_max: 360.0,
        }
    }
}

impl GpsNoiseParams {
    /// Everything off: fixes equal the true position.
    pub fn noiseless() -> Self {
        Self {
            offset_max: 0.0,
            white_std: 0.0,
            drift_std: 0.0,
            blackouts: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let non_negative = [
            ("offset_max", self.offset_max),
            ("white_std", self.white_std),
            ("drift_std", self.drift_std),
            ("blackout_min", self.blackout_min),
            ("blackout_gap_min", self.blackout_gap_min),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("gps.{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.drift_time_constant > 0.0) {
            return Err(SimError::Config("gps.drift_time_constant must be positive".into()));
        }
        if !(self.blackout_max >= self.blackout_min && self.blackout_max.is_finite()) {
            return Err(SimError::Config("gps.blackout_max must be >= blackout_min".into()));
        }
        if !(self.blackout_gap_max >= self.blackout_gap_min && self.blackout_gap_max.is_finite()) {
            return Err(SimError::Config("gps.blackout_gap_max must be >= blackout_gap_min".into()));
        }
        if self.blackouts && self.blackout_gap_max <= 0.0 {
            return Err(SimError::Config("gps.blackout_gap_max must be positive".into()));
        }
        Ok(())
    }
}

/// One receiver's error process: constant bias, an Ornstein-Uhlenbeck drift,
/// white noise and scheduled blackouts.
#[derive(Debug, Clone)]
pub struct GpsNoiseModel {
    params: GpsNoiseParams,
    offset: Vec2,
    drift: Vec2,
    time: f64,
    blackout: Option<(f64, f64)>,
    next_onset: f64,
    history: Vec<(f64, f64)>,
    rng: ChaCha8Rng,
}

impl GpsNoiseModel {
    /// Draws the bias, the initial drift from its stationary law and the
    /// first blackout onset.
    pub fn new(params: GpsNoiseParams, mut rng: ChaCha8Rng) -> Self {
        let offset = Vec2::new(
            rng.random::<f64>() * params.offset_max,
            rng.random::<f64>() * params.offset_max,
        );
        let drift = Vec2::new(
            params.drift_std * standard_normal(&mut rng),
            params.drift_std * standard_normal(&mut rng),
        );
        let mut model = Self {
            params,
            offset,
            drift,
            time: 0.0,
            blackout: None,
            next_onset: f64::INFINITY,
            history: Vec::new(),
            rng,
        };
        if model.params.blackouts {
            model.next_onset = model.draw_gap();
            model.schedule();
        }
        model
    }

    pub fn offset(&self) -> Vec2 {
        self.offset
    }

    pub fn drift(&self) -> Vec2 {
        self.drift
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Blackout windows `(start, end)` started so far.
    pub fn blackouts(&self) -> &[(f64, f64)] {
        &self.history
    }

    pub fn in_blackout(&self) -> bool {
        self.blackout.is_some_and(|(s, e)| self.time >= s && self.time < e)
    }

    fn draw_gap(&mut self) -> f64 {
        uniform(self.params.blackout_gap_min, self.params.blackout_gap_max).sample(&mut self.rng)
    }

    /// Opens every blackout whose onset has passed.
    fn schedule(&mut self) {
        while self.next_onset <= self.time {
            let duration = uniform(self.params.blackout_min, self.params.blackout_max).sample(&mut self.rng);
            let window = (self.next_onset, self.next_onset + duration);
            self.history.push(window);
            self.blackout = Some(window);
            self.next_onset = window.1 + self.draw_gap();
        }
    }

    /// Moves the drift and the blackout schedule forward by `dt` seconds.
    pub fn advance(&mut self, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        self.time += dt;
        if self.params.drift_std > 0.0 {
            // Exact OU transition, stationary for any step size.
            let decay = (-dt / self.params.drift_time_constant).exp();
            let spread = self.params.drift_std * (1.0 - decay * decay).sqrt();
            let noise = Vec2::new(standard_normal(&mut self.rng), standard_normal(&mut self.rng));
            self.drift = self.drift * decay + noise * spread;
        }
        if self.params.blackouts {
            self.schedule();
        }
    }

    /// A fix for a receiver at `truth`, or `None` during a blackout.
    pub fn fix(&mut self, truth: Vec2) -> Option<Vec2> {
        if self.in_blackout() {
            return None;
        }
        let white = Vec2::new(standard_normal(&mut self.rng), standard_normal(&mut self.rng)) * self.params.white_std;
        Some(truth + self.offset + self.drift + white)
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

fn uniform(lo: f64, hi: f64) -> Uniform<f64> {
    Uniform::new_inclusive(lo, hi).expect("validated bounds")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn model(params: GpsNoiseParams, seed: u64) -> GpsNoiseModel {
        GpsNoiseModel::new(params, ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn noiseless_fix_is_exact() {
        let mut m = model(GpsNoiseParams::noiseless(), 1);
        m.advance(10.0);
        assert_eq!(m.fix(Vec2::new(3.0, 4.0)), Some(Vec2::new(3.0, 4.0)));
    }

    #[test]
    fn no_fix_inside_blackout() {
        let params = GpsNoiseParams {
            blackout_gap_min: 5.0,
            blackout_gap_max: 5.0,
            blackout_min: 10.0,
            blackout_max: 10.0,
            ..GpsNoiseParams::default()
        };
        let mut m = model(params, 2);
        let mut emitted = Vec::new();
        for k in 1..=40 {
            m.advance(1.0);
            emitted.push((k, m.fix(Vec2::ZERO).is_some()));
        }
        for (t, some) in emitted {
            let inside = (5..15).contains(&t) || (20..30).contains(&t) || (35..45).contains(&t);
            assert_eq!(some, !inside, "t = {t}");
        }
    }

    #[test]
    fn fixed_bias_without_drift() {
        // offset fixed by pinning the draw range to a point
        let params = GpsNoiseParams {
            offset_max: 0.0,
            drift_std: 0.0,
            blackouts: false,
            ..GpsNoiseParams::default()
        };
        let mut m = model(params, 3);
        m.offset = Vec2::new(2.0, 2.0);
        let n = 20_000;
        let mean_err: f64 = (0..n).map(|_| m.fix(Vec2::ZERO).unwrap().norm()).sum::<f64>() / n as f64;
        assert!((mean_err - 8f64.sqrt()).abs() < 0.01, "{mean_err}");
    }
}
