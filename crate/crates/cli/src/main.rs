use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use topotrack::sim::{run_experiment, run_suite, write_metrics_csv, ExperimentConfig, SimError, SuiteKind};
use topotrack::topology::{MapDocument, NodeId, PolytunnelLayout};

#[derive(Parser)]
#[command(name = "topotrack", version, about = "Simulate people tracking on polytunnel farm maps")]
struct Cli {
    /// Log progress and filter diagnostics.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated polytunnel map document.
    GenerateMap(GenerateMapArgs),
    /// Run one experiment configuration over its seeds.
    Run(RunArgs),
    /// Run a comparison suite and print its table.
    Suite(SuiteArgs),
}

#[derive(Args)]
struct GenerateMapArgs {
    /// Output path; stdout when omitted.
    #[arg(long)]
    emit_map: Option<PathBuf>,
    #[arg(long)]
    tunnels: Option<usize>,
    #[arg(long)]
    rows_per_tunnel: Option<usize>,
    #[arg(long)]
    nodes_per_row: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    node_spacing: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    row_spacing: Option<f64>,
    #[arg(long)]
    storage_nodes: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON); defaults apply to omitted fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the configured seed list; repeatable.
    #[arg(long)]
    seed: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SuiteArgs {
    /// exp1-single, exp2-policy or exp3-multi.
    #[arg(long)]
    suite: String,
    /// Base configuration shared by every row of the suite.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
}

/// Identifies a reproducible run.
#[derive(Serialize)]
struct RunManifest<'a> {
    config: &'a ExperimentConfig,
    seeds: &'a [u64],
    config_hash: String,
    out: &'a Path,
    /// SHA-256 of each written metrics file, by file name.
    metrics_sha256: Vec<(String, String)>,
}

#[derive(Serialize)]
struct MapFile<'a> {
    #[serde(flatten)]
    document: MapDocument,
    picking_route: &'a [NodeId],
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Sim(e) if !e.is_config() && !matches!(e, SimError::Io(_)) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load_config(path: Option<&Path>, seeds: &[u64]) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_json(&fs::read_to_string(p).map_err(io_err(p))?)?,
        None => ExperimentConfig::default(),
    };
    if !seeds.is_empty() {
        cfg.seeds = seeds.to_vec();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_manifest(out: &Path, cfg: &ExperimentConfig, metrics: Vec<(String, String)>) -> Result<(), CliError> {
    let manifest = RunManifest {
        config: cfg,
        seeds: &cfg.seeds,
        config_hash: sha256_hex(cfg.to_json_pretty().as_bytes()),
        out,
        metrics_sha256: metrics,
    };
    write_json(&out.join("manifest.json"), &manifest)
}

fn metrics_bytes(records: &[topotrack::sim::MetricsRecord]) -> Result<Vec<u8>, CliError> {
    let mut buf = BufWriter::new(Vec::new());
    write_metrics_csv(&mut buf, records)?;
    Ok(buf.into_inner().expect("in-memory buffer"))
}

fn generate_map(args: GenerateMapArgs) -> Result<(), CliError> {
    let d = PolytunnelLayout::default();
    let layout = PolytunnelLayout {
        tunnels: args.tunnels.unwrap_or(d.tunnels),
        rows_per_tunnel: args.rows_per_tunnel.unwrap_or(d.rows_per_tunnel),
        nodes_per_row: args.nodes_per_row.unwrap_or(d.nodes_per_row),
        node_spacing: args.node_spacing.unwrap_or(d.node_spacing),
        row_spacing: args.row_spacing.unwrap_or(d.row_spacing),
        storage_nodes: args.storage_nodes.unwrap_or(d.storage_nodes),
        ..d
    };
    let pm = layout.build().map_err(SimError::from)?;
    let file = MapFile {
        document: pm.map.to_document(),
        picking_route: &pm.picking_route,
    };
    log::info!("generated {} nodes, {} edges", pm.map.len(), pm.map.edge_count());
    match args.emit_map {
        Some(path) => write_json(&path, &file),
        None => {
            println!("{}", serde_json::to_string_pretty(&file).expect("serializable"));
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref(), &args.seed)?;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    log::info!("running {} over seeds {:?}", cfg.label(), cfg.seeds);
    let artifacts = run_experiment(&cfg)?;
    let csv = metrics_bytes(&artifacts.records)?;
    write_file(&args.out.join("metrics.csv"), &csv)?;
    write_json(&args.out.join("summary.json"), &artifacts.summary)?;
    write_manifest(&args.out, &cfg, vec![("metrics.csv".into(), sha256_hex(&csv))])?;
    let s = &artifacts.summary;
    println!(
        "{}: euclidean {:.2}({:.2}) m, topological {:.2}({:.2}) hops over {} runs",
        s.label, s.euclidean_mean, s.euclidean_std, s.topological_mean, s.topological_std, s.runs
    );
    Ok(())
}

fn suite(args: SuiteArgs) -> Result<(), CliError> {
    let kind: SuiteKind = args.suite.parse()?;
    let base = load_config(args.config.as_deref(), &args.seed)?;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    log::info!("running suite {} over seeds {:?}", kind.as_str(), base.seeds);
    let (report, artifacts) = run_suite(kind, &base)?;
    let mut hashes = Vec::new();
    for a in &artifacts {
        let name = format!("metrics-{}.csv", a.config.label());
        let csv = metrics_bytes(&a.records)?;
        write_file(&args.out.join(&name), &csv)?;
        hashes.push((name, sha256_hex(&csv)));
    }
    let table = report.table();
    write_file(&args.out.join("table.txt"), table.as_bytes())?;
    write_json(&args.out.join("summary.json"), &report)?;
    write_manifest(&args.out, &base, hashes)?;
    print!("{table}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::GenerateMap(a) => generate_map(a),
        Command::Run(a) => run(a),
        Command::Suite(a) => suite(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_separate_input_from_runtime_failures() {
        assert_eq!(CliError::from(SimError::Config("x".into())).exit_code(), 1);
        let io = std::io::Error::other("disk");
        assert_eq!(CliError::from(SimError::Io(io)).exit_code(), 1);
        let invariant = SimError::Invariant {
            time: 1.0,
            what: "particle count".into(),
        };
        assert_eq!(CliError::from(invariant).exit_code(), 2);
    }
}
