//! Next-Best-Sense: pick the robot's next sensing pose by aggregating four
//! criteria with a discrete Choquet integral.
//!
//! Utilities are computed per candidate node from a snapshot of the world:
//!
//! * travel distance (TD): `1 - route_len / max_route_len` over the candidates,
//! * sensing time (ST): `1 - t_sense / t_sense_max`,
//! * RFID gain: share of the tracked belief mass within antenna range,
//! * battery status (BS): battery left after driving there and sensing.
//!
//! Criteria interact through a [`FuzzyMeasure`] over subsets of the four
//! criteria. With an additive measure the integral reduces to a weighted sum.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::BeliefFilter;
use crate::topology::{NodeId, TopologicalMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criterion {
    TravelDistance,
    SensingTime,
    RfidGain,
    BatteryStatus,
}

impl Criterion {
    /// Fixed order, also used to break ties between equal utilities.
    pub const ALL: [Criterion; 4] = [
        Criterion::TravelDistance,
        Criterion::SensingTime,
        Criterion::RfidGain,
        Criterion::BatteryStatus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn bit(self) -> usize {
        1 << self.index()
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Criterion::TravelDistance => "TD",
            Criterion::SensingTime => "ST",
            Criterion::RfidGain => "RFID",
            Criterion::BatteryStatus => "BS",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("fuzzy measure of the empty set must be 0, got {0}")]
    EmptySetMass(f64),
    #[error("fuzzy measure of the full criteria set must be 1, got {0}")]
    FullSetMass(f64),
    #[error("fuzzy measure is not monotone: subset {subset:#06b} has {lo} > superset {superset:#06b} with {hi}")]
    NotMonotone {
        subset: usize,
        superset: usize,
        lo: f64,
        hi: f64,
    },
    #[error("fuzzy measure entries must be finite and in [0, 1]")]
    OutOfRange,
    #[error("utility of {0} must lie in [0, 1], got {1}")]
    UtilityOutOfRange(Criterion, f64),
    #[error("candidate node {0} is not on the map")]
    UnknownNode(NodeId),
    #[error("no candidate poses")]
    NoCandidates,
    #[error("no initialized filter to take an estimate from")]
    NoEstimate,
    #[error("belief vector has {got} entries, map has {expected} nodes")]
    BeliefLength { expected: usize, got: usize },
}

/// Set function over subsets of [`Criterion::ALL`], indexed by bitmask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureSpec", into = "MeasureSpec")]
pub struct FuzzyMeasure {
    values: [f64; 16],
}

const TOL: f64 = 1e-9;

impl FuzzyMeasure {
    /// Additive measure from singleton weights in criterion order.
    pub fn additive(weights: [f64; 4]) -> Result<Self, PlannerError> {
        let mut values = [0.0; 16];
        for (mask, v) in values.iter_mut().enumerate() {
            *v = (0..4).filter(|i| mask & (1 << i) != 0).map(|i| weights[i]).sum();
        }
        Self::from_values(values)
    }

    /// Validates a full table of 16 subset values.
    pub fn from_values(values: [f64; 16]) -> Result<Self, PlannerError> {
        if values[0].abs() > TOL {
            return Err(PlannerError::EmptySetMass(values[0]));
        }
        if (values[15] - 1.0).abs() > TOL {
            return Err(PlannerError::FullSetMass(values[15]));
        }
        if values.iter().any(|v| !v.is_finite() || *v < -TOL || *v > 1.0 + TOL) {
            return Err(PlannerError::OutOfRange);
        }
        for subset in 0..16 {
            for i in 0..4 {
                let superset = subset | (1 << i);
                if superset != subset && values[subset] > values[superset] + TOL {
                    return Err(PlannerError::NotMonotone {
                        subset,
                        superset,
                        lo: values[subset],
                        hi: values[superset],
                    });
                }
            }
        }
        Ok(Self { values })
    }

    /// Singleton weights TD 0.3, ST 0.1, RFID 0.35, BS 0.25, additive.
    pub fn nbs_default() -> Self {
        Self::additive([0.3, 0.1, 0.35, 0.25]).expect("weights sum to one")
    }

    pub fn value(&self, mask: usize) -> f64 {
        self.values[mask]
    }

    pub fn values(&self) -> &[f64; 16] {
        &self.values
    }

    pub fn singleton(&self, c: Criterion) -> f64 {
        self.values[c.bit()]
    }

    /// Whether `eta(A u B) = eta(A) + eta(B)` for all disjoint `A`, `B`.
    pub fn is_additive(&self) -> bool {
        (0..16).all(|mask| {
            let sum: f64 = (0..4).filter(|i| mask & (1 << i) != 0).map(|i| self.values[1 << i]).sum();
            (sum - self.values[mask]).abs() <= TOL
        })
    }
}

impl Default for FuzzyMeasure {
    fn default() -> Self {
        Self::nbs_default()
    }
}

/// Config form of a measure: either four additive weights or a full table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureSpec {
    Weights {
        td: f64,
        st: f64,
        rfid: f64,
        bs: f64,
    },
    Table {
        /// Values indexed by subset bitmask (bit 0 TD, 1 ST, 2 RFID, 3 BS).
        subsets: Vec<f64>,
    },
}

impl TryFrom<MeasureSpec> for FuzzyMeasure {
    type Error = PlannerError;

    fn try_from(spec: MeasureSpec) -> Result<Self, Self::Error> {
        match spec {
            MeasureSpec::Weights { td, st, rfid, bs } => FuzzyMeasure::additive([td, st, rfid, bs]),
            MeasureSpec::Table { subsets } => {
                let values: [f64; 16] = subsets.try_into().map_err(|_| PlannerError::OutOfRange)?;
                FuzzyMeasure::from_values(values)
            }
        }
    }
}

impl From<FuzzyMeasure> for MeasureSpec {
    fn from(m: FuzzyMeasure) -> Self {
        if m.is_additive() {
            MeasureSpec::Weights {
                td: m.values[1],
                st: m.values[2],
                rfid: m.values[4],
                bs: m.values[8],
            }
        } else {
            MeasureSpec::Table {
                subsets: m.values.to_vec(),
            }
        }
    }
}

/// Per-criterion utilities, indexed by [`Criterion::index`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Utilities(pub [f64; 4]);

impl Utilities {
    pub fn get(&self, c: Criterion) -> f64 {
        self.0[c.index()]
    }
}

/// Discrete Choquet integral of `u` with respect to `measure`.
///
/// Criteria are sorted by increasing utility (ties in criterion order) and
/// each increment `u_(j) - u_(j-1)` is weighted by the measure of the
/// criteria ranked `j` and above.
pub fn choquet(u: &Utilities, measure: &FuzzyMeasure) -> Result<f64, PlannerError> {
    for c in Criterion::ALL {
        let v = u.get(c);
        if !(0.0..=1.0).contains(&v) {
            return Err(PlannerError::UtilityOutOfRange(c, v));
        }
    }
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| u.0[a].total_cmp(&u.0[b]).then(a.cmp(&b)));

    let mut upper = 0b1111usize;
    let mut previous = 0.0;
    let mut score = 0.0;
    for &i in &order {
        score += (u.0[i] - previous) * measure.value(upper);
        previous = u.0[i];
        upper &= !(1 << i);
    }
    Ok(score)
}

/// What the planner knows about the world when it scores candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSnapshot {
    pub robot_node: NodeId,
    /// Battery charge in percent.
    pub battery: f64,
    /// Belief mass per node summed over tracked people (any scale).
    pub belief: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    /// Antenna range used by the RFID criterion, metres.
    pub rfid_range: f64,
    /// Time to perform a sensing operation at any node, seconds.
    pub sensing_time: f64,
    pub max_sensing_time: f64,
    /// Battery drain while driving, percent per metre.
    pub drain_per_meter: f64,
    /// Battery drain while sensing, percent per second.
    pub drain_per_second: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            rfid_range: 5.0,
            sensing_time: 2.0,
            max_sensing_time: 2.0,
            drain_per_meter: 0.02,
            drain_per_second: 0.0,
        }
    }
}

/// A scored candidate pose.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingPose {
    pub node: NodeId,
    /// Heading of the last edge driven to reach the node, radians.
    pub orientation: f64,
    pub utilities: Utilities,
    pub score: f64,
    /// Route length from the robot, metres.
    pub travel: f64,
}

/// Utilities of visiting `node`, given the longest candidate route
/// `max_route` from the robot.
pub fn criterion_utilities(
    map: &TopologicalMap,
    node: NodeId,
    snapshot: &WorldSnapshot,
    params: &PlannerParams,
    max_route: f64,
) -> Result<Utilities, PlannerError> {
    if !map.contains(node) {
        return Err(PlannerError::UnknownNode(node));
    }
    if snapshot.belief.len() != map.len() {
        return Err(PlannerError::BeliefLength {
            expected: map.len(),
            got: snapshot.belief.len(),
        });
    }
    let travel = map.route_length(snapshot.robot_node, node);
    let td = if max_route > 0.0 { 1.0 - travel / max_route } else { 1.0 };

    let st = if params.max_sensing_time > 0.0 {
        1.0 - params.sensing_time / params.max_sensing_time
    } else {
        1.0
    };

    let total: f64 = snapshot.belief.iter().sum();
    let here = map.coords(node);
    let rfid = if total > 0.0 {
        let in_range: f64 = map
            .node_ids()
            .filter(|&n| map.coords(n).distance(here) <= params.rfid_range)
            .map(|n| snapshot.belief[n.0])
            .sum();
        in_range / total
    } else {
        0.0
    };

    let remaining =
        snapshot.battery - params.drain_per_meter * travel - params.drain_per_second * params.sensing_time;
    let bs = remaining / 100.0;

    Ok(Utilities([
        td.clamp(0.0, 1.0),
        st.clamp(0.0, 1.0),
        rfid.clamp(0.0, 1.0),
        bs.clamp(0.0, 1.0),
    ]))
}

fn orientation(map: &TopologicalMap, from: NodeId, to: NodeId) -> f64 {
    let route = map.route(from, to);
    match route.as_slice() {
        [.., a, b] => {
            let d = map.coords(*b) - map.coords(*a);
            d.y.atan2(d.x)
        }
        _ => 0.0,
    }
}

/// Scores every candidate.
pub fn score_candidates(
    map: &TopologicalMap,
    candidates: &[NodeId],
    snapshot: &WorldSnapshot,
    measure: &FuzzyMeasure,
    params: &PlannerParams,
) -> Result<Vec<SensingPose>, PlannerError> {
    if let Some(&bad) = candidates.iter().find(|&&c| !map.contains(c)) {
        return Err(PlannerError::UnknownNode(bad));
    }
    let max_route = candidates
        .iter()
        .map(|&c| map.route_length(snapshot.robot_node, c))
        .fold(0.0, f64::max);
    candidates
        .iter()
        .map(|&node| {
            let utilities = criterion_utilities(map, node, snapshot, params, max_route)?;
            Ok(SensingPose {
                node,
                orientation: orientation(map, snapshot.robot_node, node),
                score: choquet(&utilities, measure)?,
                travel: map.route_length(snapshot.robot_node, node),
                utilities,
            })
        })
        .collect()
}

/// Greedy Next-Best-Sense choice: highest score, then shorter travel, then
/// lower node id.
pub fn select_next_pose(
    map: &TopologicalMap,
    candidates: &[NodeId],
    snapshot: &WorldSnapshot,
    measure: &FuzzyMeasure,
    params: &PlannerParams,
) -> Result<SensingPose, PlannerError> {
    let scored = score_candidates(map, candidates, snapshot, measure, params)?;
    scored
        .into_iter()
        .min_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.travel.total_cmp(&b.travel))
                .then(a.node.cmp(&b.node))
        })
        .ok_or(PlannerError::NoCandidates)
}

/// Baseline policy: drive to the current estimate of the most confident
/// initialized filter.
pub fn estimated_node_policy<'a>(
    filters: impl IntoIterator<Item = &'a BeliefFilter>,
) -> Result<NodeId, PlannerError> {
    let mut best: Option<(f64, NodeId)> = None;
    for f in filters {
        if let Some(n) = f.estimate() {
            let c = f.confidence();
            if best.is_none_or(|(bc, _)| c > bc) {
                best = Some((c, n));
            }
        }
    }
    best.map(|(_, n)| n).ok_or(PlannerError::NoEstimate)
}
