//! Python bindings: scenario configuration, single trials, sweeps and the
//! protocol/metric primitives.

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use matrep_core::metrics::{self, Stat};
use matrep_core::protocol::{deep, uniform};
use matrep_core::sweep::AggregateRow;
use matrep_core::{
    run_scenario_trial, ProtocolKind, ScenarioConfig, SegmentSet, StorageSnapshot, SweepSpec,
    TrialMetrics,
};

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn protocol(name: &str) -> PyResult<ProtocolKind> {
    name.parse().map_err(value_err)
}

/// A scenario: every `section.key` setting of the simulator.
#[pyclass(name = "Scenario", module = "matrep")]
struct PyScenario {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    /// Default 50x50 scenario.
    #[new]
    fn new() -> Self {
        Self {
            inner: ScenarioConfig::default(),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        ScenarioConfig::load(path)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        ScenarioConfig::parse_str(text)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    /// Sets one `section.key` to a value given as text, then revalidates.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        let mut next = self.inner.clone();
        if !next.set(key, value).map_err(value_err)? {
            return Err(PyKeyError::new_err(key.to_string()));
        }
        next.validate().map_err(value_err)?;
        self.inner = next;
        Ok(())
    }

    fn to_conf(&self) -> String {
        self.inner.to_conf_string()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.topology.rows * self.inner.topology.cols
    }

    #[getter]
    fn trials(&self) -> usize {
        self.inner.sim.trials
    }

    #[setter]
    fn set_trials(&mut self, trials: usize) -> PyResult<()> {
        if trials == 0 {
            return Err(PyValueError::new_err("trials must be at least 1"));
        }
        self.inner.sim.trials = trials;
        Ok(())
    }

    /// Runs one trial of `protocol` at storage probability `p`; returns its
    /// metrics plus the per-node storage bitmasks.
    #[pyo3(signature = (protocol, p, seed))]
    fn run_trial<'py>(
        &self,
        py: Python<'py>,
        protocol: &str,
        p: f64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let kind = self::protocol(protocol)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(PyValueError::new_err(format!("p={p} outside [0, 1]")));
        }
        let cfg = self.inner.for_point(kind, p);
        let result = py.detach(|| run_scenario_trial(&cfg, seed));
        let m = TrialMetrics::from_trial(&result, cfg.window);
        let d = metrics_dict(py, &m)?;
        d.set_item("master", result.master.0)?;
        d.set_item("transmissions", result.transmissions.len())?;
        d.set_item("collisions", result.collisions)?;
        d.set_item(
            "stored",
            result.stored.iter().map(|s| s.bits()).collect::<Vec<_>>(),
        )?;
        Ok(d)
    }

    /// Runs `trials` seeded trials for every (protocol, p) pair; returns one
    /// dict of means and standard deviations per pair.
    #[pyo3(signature = (protocols, probabilities, parallel = true))]
    fn run_sweep<'py>(
        &self,
        py: Python<'py>,
        protocols: Vec<String>,
        probabilities: Vec<f64>,
        parallel: bool,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let kinds = protocols
            .iter()
            .map(|s| protocol(s))
            .collect::<PyResult<Vec<_>>>()?;
        let spec = SweepSpec::new(kinds, probabilities).map_err(value_err)?;
        let cfg = self.inner.clone();
        let out = py.detach(|| matrep_core::run_sweep(&cfg, &spec, parallel));
        if let Some(f) = out.failures.first() {
            return Err(PyRuntimeError::new_err(format!(
                "{} trial(s) failed; first: {} p={} seed={}: {}",
                out.failures.len(),
                f.protocol,
                f.p,
                f.seed,
                f.message
            )));
        }
        out.aggregates.iter().map(|a| aggregate_dict(py, a)).collect()
    }

    fn __repr__(&self) -> String {
        let t = &self.inner.topology;
        format!(
            "Scenario({}x{}, range={}, protocol={}, trials={})",
            t.rows, t.cols, t.comm_range_m, self.inner.protocol.kind, self.inner.sim.trials
        )
    }
}

fn metrics_dict<'py>(py: Python<'py>, m: &TrialMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("existence_ratio", m.existence_ratio)?;
    d.set_item("segment_counts", m.segment_counts.clone())?;
    d.set_item("avg_energy_j", m.avg_energy_j)?;
    d.set_item("reachability", m.reachability)?;
    d.set_item("retransmitting_nodes", m.retransmitting_nodes)?;
    Ok(d)
}

fn aggregate_dict<'py>(py: Python<'py>, a: &AggregateRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let r = &a.report;
    d.set_item("protocol", a.protocol.name())?;
    d.set_item("p", a.p)?;
    d.set_item("trials", r.trials_aggregated)?;
    let pair = |s: Stat| (s.mean, s.std);
    d.set_item("existence_ratio", pair(r.existence_ratio))?;
    d.set_item(
        "segment_counts",
        r.segment_counts.iter().map(|s| pair(*s)).collect::<Vec<_>>(),
    )?;
    d.set_item("avg_energy_j", pair(r.avg_energy_j))?;
    d.set_item("reachability", pair(r.reachability))?;
    d.set_item("retransmitting_nodes", pair(r.retransmitting_nodes))?;
    Ok(d)
}

/// Importance level to storage probability.
#[pyfunction]
fn storage_probability(importance: f64) -> PyResult<f64> {
    uniform::storage_probability(importance).map_err(value_err)
}

/// DEEP forwarding probability `min(1, beta / degree)`.
#[pyfunction]
fn forward_probability(beta: f64, degree: usize) -> f64 {
    deep::forward_probability(beta, degree)
}

/// Existence ratio of a row-major grid of per-node segment bitmasks.
#[pyfunction]
#[pyo3(signature = (rows, cols, stored, window = 5, segments = 3))]
fn existence_ratio(
    rows: usize,
    cols: usize,
    stored: Vec<u64>,
    window: usize,
    segments: u16,
) -> PyResult<f64> {
    if segments > SegmentSet::MAX_SEGMENTS {
        return Err(PyValueError::new_err("at most 64 segments"));
    }
    let snap = StorageSnapshot::grid(rows, cols, stored.into_iter().map(SegmentSet).collect());
    metrics::existence_ratio(&snap, window, segments).map_err(value_err)
}

#[pymodule]
fn matrep(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(storage_probability, m)?)?;
    m.add_function(wrap_pyfunction!(forward_probability, m)?)?;
    m.add_function(wrap_pyfunction!(existence_ratio, m)?)?;
    Ok(())
}
