use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SuiteKind};
use super::metrics::{summarize, MethodSummary, MetricsRecord, METRICS_HEADER};
use super::world::{Environment, World};
use super::SimError;

/// Everything produced by one experiment.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    /// Rows ordered by seed (in config order), then time, then picker.
    pub records: Vec<MetricsRecord>,
    pub summary: MethodSummary,
}

/// Simulates one seed of an experiment.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<MetricsRecord>, SimError> {
    cfg.validate()?;
    let env = Environment::build(&cfg.map)?;
    World::new(cfg, &env, seed)?.run(cfg.duration)
}

fn assemble(cfg: &ExperimentConfig, label: &str, runs: Vec<Vec<MetricsRecord>>) -> RunArtifacts {
    let grouped: Vec<(u64, &[MetricsRecord])> = cfg.seeds.iter().copied().zip(runs.iter().map(Vec::as_slice)).collect();
    let summary = summarize(label, cfg.method.as_str(), cfg.policy.as_str(), cfg.pickers, &grouped);
    RunArtifacts {
        config: cfg.clone(),
        records: runs.into_iter().flatten().collect(),
        summary,
    }
}

/// Runs every seed of `cfg` in parallel; the output does not depend on
/// scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts, SimError> {
    cfg.validate()?;
    let env = Environment::build(&cfg.map)?;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| World::new(cfg, &env, seed)?.run(cfg.duration))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(cfg, cfg.method.display_name(), runs))
}

/// Writes the header and every record. The header is written even when
/// there are no records.
pub fn write_metrics_csv<W: Write>(out: W, records: &[MetricsRecord]) -> Result<(), SimError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Comparison table of one suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub rows: Vec<MethodSummary>,
    /// Baseline-to-reference ratios of mean errors, keyed by description.
    pub ratios: BTreeMap<String, f64>,
}

impl SuiteReport {
    pub fn row(&self, label: &str) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.label == label)
    }

    fn ratio(&self, num: &str, den: &str, topological: bool) -> Option<f64> {
        let (a, b) = (self.row(num)?, self.row(den)?);
        Some(if topological {
            a.topological_mean / b.topological_mean
        } else {
            a.euclidean_mean / b.euclidean_mean
        })
    }

    fn fill_ratios(&mut self, kind: SuiteKind) {
        let pairs: &[(&str, &str)] = match kind {
            SuiteKind::Exp1Single => &[
                ("Khan-unconnected", "RFID+LIDAR+GPS"),
                ("Khan-connected", "RFID+LIDAR+GPS"),
                ("LIDAR+GPS", "RFID+LIDAR+GPS"),
            ],
            SuiteKind::Exp2Policy => &[("EstimatedNode", "Next-Best-Sense")],
            SuiteKind::Exp3Multi => &[("ConstantSpeed", "RFID+LIDAR+GPS"), ("NoMonitor", "RFID+LIDAR+GPS")],
        };
        for &(num, den) in pairs {
            for (topological, kind) in [(true, "topological"), (false, "euclidean")] {
                if let Some(r) = self.ratio(num, den, topological) {
                    self.ratios.insert(format!("{num} / {den} {kind}"), r);
                }
            }
        }
    }

    /// Plain-text table with mean(std) of both errors per row.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "suite {}", self.suite);
        let _ = writeln!(
            s,
            "{:<18} {:>16} {:>18} {:>5} {:>8}  seeds",
            "method", "euclidean [m]", "topological [hops]", "runs", "samples"
        );
        for r in &self.rows {
            let seeds = r.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
            let _ = writeln!(
                s,
                "{:<18} {:>16} {:>18} {:>5} {:>8}  {}",
                r.label,
                format!("{:.2}({:.2})", r.euclidean_mean, r.euclidean_std),
                format!("{:.2}({:.2})", r.topological_mean, r.topological_std),
                r.runs,
                r.samples,
                seeds
            );
        }
        for (k, v) in &self.ratios {
            let _ = writeln!(s, "{k}: {v:.2}x");
        }
        s
    }
}

fn suite_label(kind: SuiteKind, cfg: &ExperimentConfig) -> &'static str {
    match kind {
        SuiteKind::Exp2Policy => cfg.policy.display_name(),
        _ => cfg.method.display_name(),
    }
}

/// Runs every configuration of a suite, all seeds in parallel, and merges
/// the results in configuration then seed order.
pub fn run_suite(kind: SuiteKind, base: &ExperimentConfig) -> Result<(SuiteReport, Vec<RunArtifacts>), SimError> {
    base.validate()?;
    let configs = kind.configs(base);
    for c in &configs {
        c.validate()?;
    }
    let env = Environment::build(&base.map)?;
    let jobs: Vec<(usize, u64)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, seed)| World::new(&configs[i], &env, seed)?.run(configs[i].duration))
        .collect::<Result<Vec<_>, _>>()?;

    let mut results = results.into_iter();
    let mut artifacts = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let runs: Vec<_> = results.by_ref().take(cfg.seeds.len()).collect();
        artifacts.push(assemble(cfg, suite_label(kind, cfg), runs));
    }
    let mut report = SuiteReport {
        suite: kind.as_str().to_string(),
        rows: artifacts.iter().map(|a| a.summary.clone()).collect(),
        ratios: BTreeMap::new(),
    };
    report.fill_ratios(kind);
    Ok((report, artifacts))
}
