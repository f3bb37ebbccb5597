//! Batch execution over protocols and storage probabilities, plus the CSV
//! outputs.

use std::cmp::Ordering;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::metrics::{aggregate, MetricsReport, TrialMetrics};
use crate::protocol::deep::DeepProtocol;
use crate::protocol::uniform::UniformProtocol;
use crate::protocol::ProtocolKind;
use crate::topology::Topology;
use crate::trial::{run_trial, TrialResult};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Runs one trial of the scenario's configured protocol.
pub fn run_scenario_trial(cfg: &ScenarioConfig, seed: u64) -> TrialResult {
    let topology = cfg.build_topology(seed);
    run_on_topology(cfg, &topology, seed)
}

pub fn run_on_topology(cfg: &ScenarioConfig, topology: &Topology, seed: u64) -> TrialResult {
    let params = cfg.trial_params();
    match cfg.protocol.kind {
        ProtocolKind::Uniform => run_trial(
            &UniformProtocol::new(cfg.uniform_params()),
            topology,
            &params,
            seed,
        ),
        ProtocolKind::Deep => {
            run_trial(&DeepProtocol::new(cfg.deep_params()), topology, &params, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub protocols: Vec<ProtocolKind>,
    pub probabilities: Vec<f64>,
}

impl SweepSpec {
    pub fn new(protocols: Vec<ProtocolKind>, probabilities: Vec<f64>) -> Result<Self, String> {
        if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(format!("probability {p} outside [0, 1]"));
        }
        Ok(Self {
            protocols,
            probabilities,
        })
    }

    /// 0.1, 0.2, ..., 1.0 for both protocols.
    pub fn full() -> Self {
        Self {
            protocols: vec![ProtocolKind::Uniform, ProtocolKind::Deep],
            probabilities: (1..=10).map(|i| f64::from(i) / 10.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub protocol: ProtocolKind,
    pub p: f64,
    pub trial: usize,
    pub seed: u64,
    pub metrics: TrialMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub protocol: ProtocolKind,
    pub p: f64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailedRun {
    pub protocol: ProtocolKind,
    pub p: f64,
    pub trial: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub rows: Vec<TrialRow>,
    pub aggregates: Vec<AggregateRow>,
    pub failures: Vec<FailedRun>,
}

fn point_order(a: (ProtocolKind, f64, usize), b: (ProtocolKind, f64, usize)) -> Ordering {
    a.0.cmp(&b.0)
        .then(a.1.total_cmp(&b.1))
        .then(a.2.cmp(&b.2))
}

/// Runs `cfg.sim.trials` trials per `(protocol, p)` point with seeds
/// `base_seed + trial`. Trials run on the rayon pool when `parallel` is set;
/// output order does not depend on it.
pub fn run_sweep(cfg: &ScenarioConfig, spec: &SweepSpec, parallel: bool) -> SweepOutcome {
    let mut jobs = Vec::new();
    for &kind in &spec.protocols {
        for &p in &spec.probabilities {
            for trial in 0..cfg.sim.trials {
                jobs.push((kind, p, trial));
            }
        }
    }
    let run = |&(kind, p, trial): &(ProtocolKind, f64, usize)| {
        let seed = cfg.sim.base_seed.wrapping_add(trial as u64);
        let point = cfg.for_point(kind, p);
        catch_unwind(AssertUnwindSafe(|| {
            let result = run_scenario_trial(&point, seed);
            TrialMetrics::from_trial(&result, point.window)
        }))
        .map(|metrics| TrialRow {
            protocol: kind,
            p,
            trial,
            seed,
            metrics,
        })
        .map_err(|e| FailedRun {
            protocol: kind,
            p,
            trial,
            seed,
            message: e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "trial panicked".to_string()),
        })
    };
    let results: Vec<Result<TrialRow, FailedRun>> = if parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };

    let mut out = SweepOutcome::default();
    for r in results {
        match r {
            Ok(row) => out.rows.push(row),
            Err(f) => out.failures.push(f),
        }
    }
    out.rows
        .sort_by(|a, b| point_order((a.protocol, a.p, a.trial), (b.protocol, b.p, b.trial)));
    out.failures
        .sort_by(|a, b| point_order((a.protocol, a.p, a.trial), (b.protocol, b.p, b.trial)));

    for &kind in &spec.protocols {
        for &p in &spec.probabilities {
            let metrics: Vec<TrialMetrics> = out
                .rows
                .iter()
                .filter(|r| r.protocol == kind && r.p == p)
                .map(|r| r.metrics.clone())
                .collect();
            if let Ok(report) = aggregate(&metrics) {
                out.aggregates.push(AggregateRow {
                    protocol: kind,
                    p,
                    report,
                });
            }
        }
    }
    out
}

/// Per-trial CSV. Segment columns are `seg0_count .. seg{S-1}_count`.
pub fn trial_header(segments: usize) -> Vec<String> {
    let mut h: Vec<String> = ["protocol", "p", "trial", "seed", "existence_ratio"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..segments).map(|s| format!("seg{s}_count")));
    h.extend(
        ["avg_energy_j", "reachability", "retx_nodes"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

pub fn emit_csv(rows: &[TrialRow], segments: usize, path: &Path) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trial_header(segments))?;
    for r in rows {
        let m = &r.metrics;
        let mut rec = vec![
            r.protocol.name().to_string(),
            r.p.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            m.existence_ratio.to_string(),
        ];
        rec.extend(m.segment_counts.iter().map(|c| c.to_string()));
        rec.push(m.avg_energy_j.to_string());
        rec.push(m.reachability.to_string());
        rec.push(m.retransmitting_nodes.to_string());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn aggregate_header(segments: usize) -> Vec<String> {
    let mut h = vec!["protocol".to_string(), "p".to_string(), "trials".to_string()];
    let mut pair = |name: String| {
        h.push(format!("mean_{name}"));
        h.push(format!("std_{name}"));
    };
    pair("existence_ratio".into());
    for s in 0..segments {
        pair(format!("seg{s}_count"));
    }
    pair("avg_energy_j".into());
    pair("reachability".into());
    pair("retx_nodes".into());
    h
}

pub fn emit_aggregate_csv(
    rows: &[AggregateRow],
    segments: usize,
    path: &Path,
) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(aggregate_header(segments))?;
    for r in rows {
        let rep = &r.report;
        let mut rec = vec![
            r.protocol.name().to_string(),
            r.p.to_string(),
            rep.trials_aggregated.to_string(),
        ];
        let stats = std::iter::once(rep.existence_ratio)
            .chain(rep.segment_counts.iter().copied())
            .chain([rep.avg_energy_j, rep.reachability, rep.retransmitting_nodes]);
        for s in stats {
            rec.push(s.mean.to_string());
            rec.push(s.std.to_string());
        }
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `node_id,x,y,z,degree`
pub fn dump_topology(topology: &Topology, path: &Path) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node_id", "x", "y", "z", "degree"])?;
    for n in topology.nodes() {
        let p = topology.position(n);
        w.write_record([
            n.0.to_string(),
            p.x.to_string(),
            p.y.to_string(),
            p.z.to_string(),
            topology.degree(n).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `node_id,x,y,segments_bitmask`
pub fn dump_storage(
    topology: &Topology,
    trial: &TrialResult,
    path: &Path,
) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node_id", "x", "y", "segments_bitmask"])?;
    for n in topology.nodes() {
        let p = topology.position(n);
        w.write_record([
            n.0.to_string(),
            p.x.to_string(),
            p.y.to_string(),
            trial.stored[n.index()].bits().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
