//! Scenario files: one `section.key = value` per line, `#` starts a comment.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::energy::EnergyModel;
use crate::metrics::SegmentSet;
use crate::protocol::deep::DeepParams;
use crate::protocol::uniform::UniformParams;
use crate::protocol::{Capacity, ProtocolKind};
use crate::sim::TrialStreams;
use crate::topology::{place_uniform, GridDims, RadioParams, Topology};
use crate::trial::TrialParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` set twice")]
    Duplicate { line: usize, key: String },
    #[error("{key}: cannot parse `{value}`: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{key}: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Grid,
    Uniform,
}

impl FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grid" => Ok(Placement::Grid),
            "uniform" => Ok(Placement::Uniform),
            other => Err(format!("unknown placement `{other}` (expected grid or uniform)")),
        }
    }
}

impl Placement {
    fn as_str(self) -> &'static str {
        match self {
            Placement::Grid => "grid",
            Placement::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyConfig {
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    pub comm_range_m: f64,
    pub z_m: f64,
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub c_th: u32,
    pub t_max_ms: f64,
    pub importance: f64,
    pub segments: u16,
    pub stagger_ms: f64,
    pub energy_extension: bool,
    pub beta: f64,
    pub storage_p: f64,
    pub corrective_lo_ms: f64,
    pub corrective_hi_ms: f64,
    pub jitter_ms: f64,
    pub capacity_segments: Option<usize>,
}

/// Medium access. The default transmits as soon as the protocol asks.
#[derive(Debug, Clone, PartialEq)]
pub struct MacConfig {
    pub carrier_sense: bool,
    pub backoff_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyConfig {
    pub voltage_v: f64,
    pub e_initial_j: f64,
    pub i_tx_ma: f64,
    pub i_rx_ma: f64,
    pub i_idle_ma: f64,
    pub initial_level_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t_end_ms: f64,
    pub trials: usize,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub dump_topology: bool,
    pub dump_storage: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub topology: TopologyConfig,
    pub protocol: ProtocolConfig,
    pub radio: RadioParams,
    pub mac: MacConfig,
    pub energy: EnergyConfig,
    pub sim: SimConfig,
    /// Side of the square uniformity window, in grid cells.
    pub window: usize,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            topology: TopologyConfig {
                rows: 50,
                cols: 50,
                spacing_m: 1.0,
                comm_range_m: 2.9,
                z_m: 0.5,
                placement: Placement::Grid,
            },
            protocol: ProtocolConfig {
                kind: ProtocolKind::Uniform,
                c_th: 4,
                t_max_ms: 200.0,
                importance: 0.5,
                segments: 3,
                stagger_ms: 1000.0,
                energy_extension: true,
                beta: 2.0,
                storage_p: 0.5,
                corrective_lo_ms: 200.0,
                corrective_hi_ms: 400.0,
                jitter_ms: 5.0,
                capacity_segments: None,
            },
            radio: RadioParams::default(),
            mac: MacConfig {
                carrier_sense: false,
                backoff_ms: 10.0,
            },
            energy: EnergyConfig {
                voltage_v: 3.0,
                e_initial_j: 100.0,
                i_tx_ma: 10.35,
                i_rx_ma: 13.32,
                i_idle_ma: 0.688,
                initial_level_min: 1.0,
            },
            sim: SimConfig {
                t_end_ms: 100_000.0,
                trials: 60,
                base_seed: 1,
            },
            window: 5,
            output: OutputConfig {
                dir: PathBuf::from("results"),
                dump_topology: false,
                dump_storage: false,
            },
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_capacity(key: &str, value: &str) -> Result<Option<usize>, ConfigError> {
    match value {
        "unlimited" | "none" | "inf" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

/// Every recognised key, in file order.
pub const KEYS: &[&str] = &[
    "topology.rows",
    "topology.cols",
    "topology.spacing_m",
    "topology.comm_range_m",
    "topology.z_m",
    "topology.placement",
    "protocol.name",
    "protocol.c_th",
    "protocol.t_max_ms",
    "protocol.importance",
    "protocol.segments",
    "protocol.stagger_ms",
    "protocol.energy_extension",
    "protocol.beta",
    "protocol.storage_p",
    "protocol.corrective_lo_ms",
    "protocol.corrective_hi_ms",
    "protocol.jitter_ms",
    "protocol.capacity_segments",
    "radio.payload_bytes",
    "radio.header_bytes",
    "radio.bandwidth_kbps",
    "mac.carrier_sense",
    "mac.backoff_ms",
    "energy.voltage_v",
    "energy.e_initial_j",
    "energy.i_tx_ma",
    "energy.i_rx_ma",
    "energy.i_idle_ma",
    "energy.initial_level_min",
    "sim.t_end_ms",
    "sim.trials",
    "sim.base_seed",
    "metrics.window",
    "output.dir",
    "output.dump_topology",
    "output.dump_storage",
];

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_str(&text)
    }

    /// Parses a scenario on top of the defaults and validates it.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            }
            if seen.contains(&key) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            if !cfg.set(key, value)? {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(key);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Assigns one key. Returns `Ok(false)` for an unknown key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        let t = &mut self.topology;
        let p = &mut self.protocol;
        let e = &mut self.energy;
        match key {
            "topology.rows" => t.rows = parse(key, value)?,
            "topology.cols" => t.cols = parse(key, value)?,
            "topology.spacing_m" => t.spacing_m = parse(key, value)?,
            "topology.comm_range_m" => t.comm_range_m = parse(key, value)?,
            "topology.z_m" => t.z_m = parse(key, value)?,
            "topology.placement" => t.placement = parse(key, value)?,
            "protocol.name" => p.kind = parse(key, value)?,
            "protocol.c_th" => p.c_th = parse(key, value)?,
            "protocol.t_max_ms" => p.t_max_ms = parse(key, value)?,
            "protocol.importance" => p.importance = parse(key, value)?,
            "protocol.segments" => p.segments = parse(key, value)?,
            "protocol.stagger_ms" => p.stagger_ms = parse(key, value)?,
            "protocol.energy_extension" => p.energy_extension = parse(key, value)?,
            "protocol.beta" => p.beta = parse(key, value)?,
            "protocol.storage_p" => p.storage_p = parse(key, value)?,
            "protocol.corrective_lo_ms" => p.corrective_lo_ms = parse(key, value)?,
            "protocol.corrective_hi_ms" => p.corrective_hi_ms = parse(key, value)?,
            "protocol.jitter_ms" => p.jitter_ms = parse(key, value)?,
            "protocol.capacity_segments" => p.capacity_segments = parse_capacity(key, value)?,
            "radio.payload_bytes" => self.radio.payload_bytes = parse(key, value)?,
            "radio.header_bytes" => self.radio.header_bytes = parse(key, value)?,
            "radio.bandwidth_kbps" => self.radio.bandwidth_kbps = parse(key, value)?,
            "mac.carrier_sense" => self.mac.carrier_sense = parse(key, value)?,
            "mac.backoff_ms" => self.mac.backoff_ms = parse(key, value)?,
            "energy.voltage_v" => e.voltage_v = parse(key, value)?,
            "energy.e_initial_j" => e.e_initial_j = parse(key, value)?,
            "energy.i_tx_ma" => e.i_tx_ma = parse(key, value)?,
            "energy.i_rx_ma" => e.i_rx_ma = parse(key, value)?,
            "energy.i_idle_ma" => e.i_idle_ma = parse(key, value)?,
            "energy.initial_level_min" => e.initial_level_min = parse(key, value)?,
            "sim.t_end_ms" => self.sim.t_end_ms = parse(key, value)?,
            "sim.trials" => self.sim.trials = parse(key, value)?,
            "sim.base_seed" => self.sim.base_seed = parse(key, value)?,
            "metrics.window" => self.window = parse(key, value)?,
            "output.dir" => self.output.dir = PathBuf::from(value),
            "output.dump_topology" => self.output.dump_topology = parse(key, value)?,
            "output.dump_storage" => self.output.dump_storage = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(ok: bool, key: &'static str, reason: impl Into<String>) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid {
                    key,
                    reason: reason.into(),
                })
            }
        }
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let t = &self.topology;
        let p = &self.protocol;
        let e = &self.energy;
        check(t.rows >= 1, "topology.rows", "must be at least 1")?;
        check(t.cols >= 1, "topology.cols", "must be at least 1")?;
        check(pos(t.spacing_m), "topology.spacing_m", "must be positive")?;
        check(pos(t.comm_range_m), "topology.comm_range_m", "must be positive")?;
        check(t.z_m.is_finite(), "topology.z_m", "must be finite")?;
        check(p.c_th >= 1, "protocol.c_th", "must be at least 1")?;
        check(pos(p.t_max_ms), "protocol.t_max_ms", "must be positive")?;
        check(unit(p.importance), "protocol.importance", format!("{} outside [0, 1]", p.importance))?;
        check(
            (1..=SegmentSet::MAX_SEGMENTS).contains(&p.segments),
            "protocol.segments",
            "must be in 1..=64",
        )?;
        check(nonneg(p.stagger_ms), "protocol.stagger_ms", "must be non-negative")?;
        check(pos(p.beta), "protocol.beta", "must be positive")?;
        check(unit(p.storage_p), "protocol.storage_p", format!("{} outside [0, 1]", p.storage_p))?;
        check(nonneg(p.corrective_lo_ms), "protocol.corrective_lo_ms", "must be non-negative")?;
        check(
            p.corrective_hi_ms.is_finite() && p.corrective_lo_ms < p.corrective_hi_ms,
            "protocol.corrective_hi_ms",
            "must exceed corrective_lo_ms",
        )?;
        check(nonneg(p.jitter_ms), "protocol.jitter_ms", "must be non-negative")?;
        check(
            p.capacity_segments != Some(0),
            "protocol.capacity_segments",
            "must be at least 1 or `unlimited`",
        )?;
        check(self.radio.payload_bytes + self.radio.header_bytes > 0, "radio.payload_bytes", "frame must be non-empty")?;
        check(pos(self.radio.bandwidth_kbps), "radio.bandwidth_kbps", "must be positive")?;
        check(nonneg(self.mac.backoff_ms), "mac.backoff_ms", "must be non-negative")?;
        check(pos(e.voltage_v), "energy.voltage_v", "must be positive")?;
        check(pos(e.e_initial_j), "energy.e_initial_j", "must be positive")?;
        check(pos(e.i_tx_ma), "energy.i_tx_ma", "must be positive")?;
        check(pos(e.i_rx_ma), "energy.i_rx_ma", "must be positive")?;
        check(pos(e.i_idle_ma), "energy.i_idle_ma", "must be positive")?;
        check(
            e.initial_level_min > 0.0 && e.initial_level_min <= 1.0,
            "energy.initial_level_min",
            "must be in (0, 1]",
        )?;
        check(pos(self.sim.t_end_ms), "sim.t_end_ms", "must be positive")?;
        check(self.sim.trials >= 1, "sim.trials", "must be at least 1")?;
        check(self.window % 2 == 1, "metrics.window", "must be odd")?;
        Ok(())
    }

    /// Renders the config back into scenario-file form.
    pub fn to_conf_string(&self) -> String {
        let t = &self.topology;
        let p = &self.protocol;
        let e = &self.energy;
        let cap = p
            .capacity_segments
            .map_or_else(|| "unlimited".to_string(), |c| c.to_string());
        let values: Vec<String> = vec![
            t.rows.to_string(),
            t.cols.to_string(),
            t.spacing_m.to_string(),
            t.comm_range_m.to_string(),
            t.z_m.to_string(),
            t.placement.as_str().to_string(),
            p.kind.name().to_string(),
            p.c_th.to_string(),
            p.t_max_ms.to_string(),
            p.importance.to_string(),
            p.segments.to_string(),
            p.stagger_ms.to_string(),
            p.energy_extension.to_string(),
            p.beta.to_string(),
            p.storage_p.to_string(),
            p.corrective_lo_ms.to_string(),
            p.corrective_hi_ms.to_string(),
            p.jitter_ms.to_string(),
            cap,
            self.radio.payload_bytes.to_string(),
            self.radio.header_bytes.to_string(),
            self.radio.bandwidth_kbps.to_string(),
            self.mac.carrier_sense.to_string(),
            self.mac.backoff_ms.to_string(),
            e.voltage_v.to_string(),
            e.e_initial_j.to_string(),
            e.i_tx_ma.to_string(),
            e.i_rx_ma.to_string(),
            e.i_idle_ma.to_string(),
            e.initial_level_min.to_string(),
            self.sim.t_end_ms.to_string(),
            self.sim.trials.to_string(),
            self.sim.base_seed.to_string(),
            self.window.to_string(),
            self.output.dir.display().to_string(),
            self.output.dump_topology.to_string(),
            self.output.dump_storage.to_string(),
        ];
        let mut out = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Copy set up for `kind` at storage probability / importance `p`.
    pub fn for_point(&self, kind: ProtocolKind, p: f64) -> ScenarioConfig {
        let mut cfg = self.clone();
        cfg.protocol.kind = kind;
        cfg.protocol.importance = p;
        cfg.protocol.storage_p = p;
        cfg
    }

    pub fn energy_model(&self) -> EnergyModel {
        EnergyModel {
            voltage_v: self.energy.voltage_v,
            i_tx_a: self.energy.i_tx_ma * 1e-3,
            i_rx_a: self.energy.i_rx_ma * 1e-3,
            i_idle_a: self.energy.i_idle_ma * 1e-3,
        }
    }

    pub fn trial_params(&self) -> TrialParams {
        let importance = match self.protocol.kind {
            ProtocolKind::Uniform => self.protocol.importance,
            ProtocolKind::Deep => self.protocol.storage_p,
        };
        TrialParams {
            radio: self.radio,
            energy: self.energy_model(),
            e_initial_j: self.energy.e_initial_j,
            initial_level_min: self.energy.initial_level_min,
            segments: self.protocol.segments,
            stagger_ms: self.protocol.stagger_ms,
            importance,
            t_end_ms: self.sim.t_end_ms,
            carrier_sense: self.mac.carrier_sense,
            backoff_ms: self.mac.backoff_ms,
        }
    }

    pub fn uniform_params(&self) -> UniformParams {
        UniformParams {
            c_th: self.protocol.c_th,
            t_max_ms: self.protocol.t_max_ms,
            energy_extension: self.protocol.energy_extension,
            capacity: Capacity(self.protocol.capacity_segments),
        }
    }

    pub fn deep_params(&self) -> DeepParams {
        DeepParams {
            beta: self.protocol.beta,
            storage_p: self.protocol.storage_p,
            corrective_lo_ms: self.protocol.corrective_lo_ms,
            corrective_hi_ms: self.protocol.corrective_hi_ms,
            jitter_ms: self.protocol.jitter_ms,
            capacity: Capacity(self.protocol.capacity_segments),
        }
    }

    /// Node layout for a trial seed. Grid layouts ignore the seed.
    pub fn build_topology(&self, seed: u64) -> Topology {
        let t = &self.topology;
        match t.placement {
            Placement::Grid => Topology::grid(t.rows, t.cols, t.spacing_m, t.z_m, t.comm_range_m),
            Placement::Uniform => {
                let mut streams = TrialStreams::new(seed);
                let positions = place_uniform(
                    t.rows * t.cols,
                    t.rows as f64 * t.spacing_m,
                    t.cols as f64 * t.spacing_m,
                    t.z_m,
                    &mut streams.placement,
                );
                Topology::new(positions, t.comm_range_m, None)
            }
        }
    }

    pub fn grid_dims(&self) -> Option<GridDims> {
        (self.topology.placement == Placement::Grid).then_some(GridDims {
            rows: self.topology.rows,
            cols: self.topology.cols,
        })
    }
}
