use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use matrep_core::config::ScenarioConfig;
use matrep_core::sweep::{
    dump_storage, dump_topology, emit_aggregate_csv, emit_csv, run_on_topology, run_sweep,
    OutputError, SweepOutcome,
};
use matrep_core::{ProtocolKind, SweepSpec};

/// Batch runner for the communicating-material replication simulator.
///
/// Runs `trials` seeded trials for every (protocol, p) pair and writes
/// `trials.csv` and `aggregate.csv` to the output directory.
#[derive(Debug, Parser)]
#[command(name = "matrep", version)]
struct Args {
    /// Scenario file (`section.key = value` lines). Defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Protocols to run, comma separated.
    #[arg(long, value_delimiter = ',')]
    protocol: Vec<ProtocolKind>,

    /// Storage probabilities / importance levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    p: Vec<f64>,

    #[arg(long)]
    trials: Option<usize>,

    /// Base seed; trial k uses seed + k.
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    out: Option<PathBuf>,

    /// Write topology.csv (node_id,x,y,z,degree).
    #[arg(long)]
    dump_topology: bool,

    /// Write per-node final storage of trial 0 for every point.
    #[arg(long)]
    dump_storage: bool,

    /// Extra `key=value` overrides applied after the scenario file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Run trials on one thread.
    #[arg(long)]
    serial: bool,

    /// Print the default scenario file and exit.
    #[arg(long)]
    print_default_config: bool,
}

fn load(args: &Args) -> Result<ScenarioConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::load(path).map_err(|e| e.to_string())?,
        None => ScenarioConfig::default(),
    };
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        if !cfg.set(k.trim(), v.trim()).map_err(|e| e.to_string())? {
            return Err(format!("unknown key `{}`", k.trim()));
        }
    }
    if let Some(t) = args.trials {
        cfg.sim.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.sim.base_seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output.dir = o.clone();
    }
    cfg.output.dump_topology |= args.dump_topology;
    cfg.output.dump_storage |= args.dump_storage;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn sweep_spec(args: &Args, cfg: &ScenarioConfig) -> Result<SweepSpec, String> {
    let protocols = if args.protocol.is_empty() {
        vec![cfg.protocol.kind]
    } else {
        args.protocol.clone()
    };
    let probabilities = if !args.p.is_empty() {
        args.p.clone()
    } else if protocols == [ProtocolKind::Deep] {
        vec![cfg.protocol.storage_p]
    } else {
        vec![cfg.protocol.importance]
    };
    SweepSpec::new(protocols, probabilities)
}

fn write_outputs(
    cfg: &ScenarioConfig,
    spec: &SweepSpec,
    outcome: &SweepOutcome,
) -> Result<(), OutputError> {
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    let segments = usize::from(cfg.protocol.segments);
    emit_csv(&outcome.rows, segments, &dir.join("trials.csv"))?;
    emit_aggregate_csv(&outcome.aggregates, segments, &dir.join("aggregate.csv"))?;
    if !outcome.failures.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("failures.csv"))?;
        w.write_record(["protocol", "p", "trial", "seed", "message"])?;
        for f in &outcome.failures {
            w.write_record([
                f.protocol.name().to_string(),
                f.p.to_string(),
                f.trial.to_string(),
                f.seed.to_string(),
                f.message.clone(),
            ])?;
        }
        w.flush()?;
    }
    let seed = cfg.sim.base_seed;
    if cfg.output.dump_topology {
        dump_topology(&cfg.build_topology(seed), &dir.join("topology.csv"))?;
    }
    if cfg.output.dump_storage {
        for &kind in &spec.protocols {
            for &p in &spec.probabilities {
                let point = cfg.for_point(kind, p);
                let topo = point.build_topology(seed);
                let trial = run_on_topology(&point, &topo, seed);
                let name = format!("storage_{}_p{}.csv", kind.name(), p);
                dump_storage(&topo, &trial, &Path::new(dir).join(name))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.print_default_config {
        print!("{}", ScenarioConfig::default().to_conf_string());
        return ExitCode::SUCCESS;
    }
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let spec = match sweep_spec(&args, &cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };

    let outcome = run_sweep(&cfg, &spec, !args.serial);
    if let Err(e) = write_outputs(&cfg, &spec, &outcome) {
        eprintln!("output error: {e}");
        return ExitCode::from(1);
    }

    println!(
        "{:<8} {:>5} {:>7} {:>10} {:>12} {:>8} {:>9}",
        "protocol", "p", "trials", "existence", "energy_j", "reach", "retx"
    );
    for a in &outcome.aggregates {
        let r = &a.report;
        println!(
            "{:<8} {:>5} {:>7} {:>10.4} {:>12.6} {:>8.4} {:>9.1}",
            a.protocol.name(),
            a.p,
            r.trials_aggregated,
            r.existence_ratio.mean,
            r.avg_energy_j.mean,
            r.reachability.mean,
            r.retransmitting_nodes.mean
        );
    }
    if !outcome.failures.is_empty() {
        for f in &outcome.failures {
            eprintln!(
                "trial failed: {} p={} trial={} seed={}: {}",
                f.protocol, f.p, f.trial, f.seed, f.message
            );
        }
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
