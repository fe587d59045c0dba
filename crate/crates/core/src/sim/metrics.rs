use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::topology::{NodeId, TopologicalMap};

/// Column names of `metrics.csv`, in order.
pub const METRICS_HEADER: [&str; 10] = [
    "t",
    "picker_id",
    "method",
    "seed",
    "euclidean_err_m",
    "topo_err_hops",
    "estimate_node",
    "jsd",
    "entropy",
    "pr_j",
];

/// One tracking-error sample for one picker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub t: f64,
    pub picker_id: usize,
    pub method: String,
    pub seed: u64,
    pub euclidean_err_m: f64,
    pub topo_err_hops: u32,
    pub estimate_node: NodeId,
    /// Divergence measured at the filter's last update.
    pub jsd: f64,
    pub entropy: f64,
    pub pr_j: f64,
}

/// Euclidean error in metres and hop count from `estimate` to the node
/// closest to `truth`.
pub fn compute_metrics(map: &TopologicalMap, estimate: NodeId, truth: Vec2) -> (f64, u32) {
    let euclidean = map.coords(estimate).distance(truth);
    let hops = map.shortest_path_hops(estimate, map.closest_node(truth));
    (euclidean, hops)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub samples: usize,
    pub euclidean_mean: f64,
    pub topological_mean: f64,
}

/// Mean and standard deviation of both errors over every sample of every
/// run of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub method: String,
    pub policy: String,
    pub pickers: usize,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub samples: usize,
    pub euclidean_mean: f64,
    pub euclidean_std: f64,
    pub topological_mean: f64,
    pub topological_std: f64,
    pub per_seed: Vec<SeedSummary>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Summarizes records grouped by seed, in the order the seeds are given.
pub fn summarize(
    label: &str,
    method: &str,
    policy: &str,
    pickers: usize,
    runs: &[(u64, &[MetricsRecord])],
) -> MethodSummary {
    let all = runs.iter().flat_map(|(_, r)| r.iter());
    let (euclidean_mean, euclidean_std) = mean_std(all.clone().map(|r| r.euclidean_err_m));
    let (topological_mean, topological_std) = mean_std(all.clone().map(|r| r.topo_err_hops as f64));
    let per_seed = runs
        .iter()
        .map(|(seed, records)| SeedSummary {
            seed: *seed,
            samples: records.len(),
            euclidean_mean: mean_std(records.iter().map(|r| r.euclidean_err_m)).0,
            topological_mean: mean_std(records.iter().map(|r| r.topo_err_hops as f64)).0,
        })
        .collect();
    MethodSummary {
        label: label.to_string(),
        method: method.to_string(),
        policy: policy.to_string(),
        pickers,
        runs: runs.len(),
        seeds: runs.iter().map(|(s, _)| *s).collect(),
        samples: all.count(),
        euclidean_mean,
        euclidean_std,
        topological_mean,
        topological_std,
        per_seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::PolytunnelLayout;

    #[test]
    fn estimate_at_closest_node_has_zero_hops() {
        let pm = PolytunnelLayout::default().build().unwrap();
        let n = pm.lanes[2][4];
        let truth = pm.map.coords(n) + Vec2::new(0.4, 0.0);
        let (e, h) = compute_metrics(&pm.map, n, truth);
        assert_eq!(h, 0);
        assert!((e - 0.4).abs() < 1e-12);
        assert_eq!(compute_metrics(&pm.map, n, pm.map.coords(n)), (0.0, 0));
    }

    #[test]
    fn adjacent_lane_is_close_in_metres_but_far_in_hops() {
        let pm = PolytunnelLayout::default().build().unwrap();
        let truth = pm.map.coords(pm.lanes[1][5]);
        let (e, h) = compute_metrics(&pm.map, pm.lanes[0][5], truth);
        assert!((e - 1.5).abs() < 1e-12);
        // out through the far lane end and back: 4 + 1 + 1 + 1 + 4
        assert_eq!(h, 11);
    }

    #[test]
    fn summary_statistics() {
        let rec = |e: f64, h: u32| MetricsRecord {
            t: 0.0,
            picker_id: 0,
            method: "ours".into(),
            seed: 0,
            euclidean_err_m: e,
            topo_err_hops: h,
            estimate_node: NodeId(0),
            jsd: 0.0,
            entropy: 0.0,
            pr_j: 0.0,
        };
        let a = vec![rec(1.0, 2), rec(3.0, 4)];
        let b = vec![rec(2.0, 0)];
        let s = summarize("x", "ours", "nbs", 1, &[(0, &a), (1, &b)]);
        assert_eq!(s.samples, 3);
        assert_eq!(s.runs, 2);
        assert!((s.euclidean_mean - 2.0).abs() < 1e-12);
        assert!((s.topological_mean - 2.0).abs() < 1e-12);
        assert!((s.topological_std - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.per_seed[1].topological_mean, 0.0);
    }
}
