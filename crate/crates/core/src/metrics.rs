//! Post-trial analysis: windowed existence ratio, per-segment storage counts,
//! reachability, energy and cross-trial aggregation.

use std::fmt;

use thiserror::Error;

use crate::topology::GridDims;
use crate::trial::TrialResult;

/// Set of segment indices `0..64` held or seen by a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct SegmentSet(pub u64);

impl SegmentSet {
    pub const EMPTY: SegmentSet = SegmentSet(0);
    pub const MAX_SEGMENTS: u16 = 64;

    /// All of `0..segments`.
    pub fn full(segments: u16) -> Self {
        assert!(segments <= Self::MAX_SEGMENTS);
        if segments == 64 {
            SegmentSet(u64::MAX)
        } else {
            SegmentSet((1u64 << segments) - 1)
        }
    }

    pub fn insert(&mut self, segment: u16) {
        assert!(segment < Self::MAX_SEGMENTS, "segment index {segment} out of range");
        self.0 |= 1 << segment;
    }

    pub fn contains(self, segment: u16) -> bool {
        segment < Self::MAX_SEGMENTS && self.0 & (1 << segment) != 0
    }

    pub fn is_superset(self, other: SegmentSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn bits(self) -> u64 {
        self.0
    }
}

impl FromIterator<u16> for SegmentSet {
    fn from_iter<T: IntoIterator<Item = u16>>(iter: T) -> Self {
        let mut s = SegmentSet::EMPTY;
        for seg in iter {
            s.insert(seg);
        }
        s
    }
}

impl fmt::Display for SegmentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("window method needs a grid placement")]
    NotGrid,
    #[error("window size must be odd and at least 1, got {0}")]
    BadWindow(usize),
    #[error("grid {rows}x{cols} does not match {nodes} nodes")]
    DimsMismatch { rows: usize, cols: usize, nodes: usize },
    #[error("cannot aggregate zero trials")]
    Empty,
    #[error("segment count differs between trials ({0} vs {1})")]
    Heterogeneous(usize, usize),
}

/// Final storage state of every node, laid out on a row-major grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageSnapshot {
    pub grid: Option<GridDims>,
    pub stored: Vec<SegmentSet>,
}

impl StorageSnapshot {
    pub fn grid(rows: usize, cols: usize, stored: Vec<SegmentSet>) -> Self {
        Self {
            grid: Some(GridDims { rows, cols }),
            stored,
        }
    }

    pub fn from_trial(trial: &TrialResult) -> Self {
        Self {
            grid: trial.grid,
            stored: trial.stored.clone(),
        }
    }
}

/// Fraction of nodes whose `window_n x window_n` neighborhood (clipped at the
/// material edge) holds at least one copy of every segment in `0..segments`.
pub fn existence_ratio(
    snapshot: &StorageSnapshot,
    window_n: usize,
    segments: u16,
) -> Result<f64, MetricsError> {
    let dims = snapshot.grid.ok_or(MetricsError::NotGrid)?;
    if window_n == 0 || window_n % 2 == 0 {
        return Err(MetricsError::BadWindow(window_n));
    }
    if dims.len() != snapshot.stored.len() {
        return Err(MetricsError::DimsMismatch {
            rows: dims.rows,
            cols: dims.cols,
            nodes: snapshot.stored.len(),
        });
    }
    if dims.is_empty() {
        return Ok(0.0);
    }
    let (rows, cols) = (dims.rows, dims.cols);
    let half = window_n / 2;
    // 2-D prefix sums of holders, one table per segment
    let stride = cols + 1;
    let tables: Vec<Vec<u32>> = (0..segments)
        .map(|seg| {
            let mut t = vec![0u32; (rows + 1) * stride];
            for r in 0..rows {
                for c in 0..cols {
                    let v = u32::from(snapshot.stored[r * cols + c].contains(seg));
                    t[(r + 1) * stride + c + 1] =
                        v + t[r * stride + c + 1] + t[(r + 1) * stride + c] - t[r * stride + c];
                }
            }
            t
        })
        .collect();
    let mut covered = 0usize;
    for r in 0..rows {
        let (r0, r1) = (r.saturating_sub(half), (r + half + 1).min(rows));
        for c in 0..cols {
            let (c0, c1) = (c.saturating_sub(half), (c + half + 1).min(cols));
            let all = tables.iter().all(|t| {
                t[r1 * stride + c1] + t[r0 * stride + c0] > t[r0 * stride + c1] + t[r1 * stride + c0]
            });
            if all {
                covered += 1;
            }
        }
    }
    Ok(covered as f64 / dims.len() as f64)
}

/// Number of nodes holding each segment index in `0..segments`.
pub fn per_segment_counts(stored: &[SegmentSet], segments: u16) -> Vec<usize> {
    (0..segments)
        .map(|s| stored.iter().filter(|set| set.contains(s)).count())
        .collect()
}

/// Fraction of nodes that received every segment at least once.
pub fn reachability(trial: &TrialResult) -> f64 {
    if trial.node_count() == 0 {
        return 0.0;
    }
    let all = SegmentSet::full(trial.segments);
    let reached = trial.seen.iter().filter(|s| s.is_superset(all)).count();
    reached as f64 / trial.node_count() as f64
}

/// Scalar outcomes of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub existence_ratio: f64,
    pub segment_counts: Vec<usize>,
    pub avg_energy_j: f64,
    pub reachability: f64,
    pub retransmitting_nodes: usize,
}

impl TrialMetrics {
    /// Existence ratio needs a grid; non-grid trials report NaN for it.
    pub fn from_trial(trial: &TrialResult, window_n: usize) -> Self {
        let existence_ratio =
            existence_ratio(&StorageSnapshot::from_trial(trial), window_n, trial.segments)
                .unwrap_or(f64::NAN);
        Self {
            existence_ratio,
            segment_counts: per_segment_counts(&trial.stored, trial.segments),
            avg_energy_j: trial.average_consumed_j(),
            reachability: reachability(trial),
            retransmitting_nodes: trial.retransmitting_nodes(),
        }
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub existence_ratio: Stat,
    pub segment_counts: Vec<Stat>,
    pub avg_energy_j: Stat,
    pub reachability: Stat,
    pub retransmitting_nodes: Stat,
    pub trials_aggregated: usize,
}

pub fn aggregate(trials: &[TrialMetrics]) -> Result<MetricsReport, MetricsError> {
    let first = trials.first().ok_or(MetricsError::Empty)?;
    let segments = first.segment_counts.len();
    if let Some(t) = trials.iter().find(|t| t.segment_counts.len() != segments) {
        return Err(MetricsError::Heterogeneous(segments, t.segment_counts.len()));
    }
    let col = |f: &dyn Fn(&TrialMetrics) -> f64| -> Stat {
        Stat::of(&trials.iter().map(f).collect::<Vec<_>>())
    };
    Ok(MetricsReport {
        existence_ratio: col(&|t| t.existence_ratio),
        segment_counts: (0..segments)
            .map(|s| col(&|t| t.segment_counts[s] as f64))
            .collect(),
        avg_energy_j: col(&|t| t.avg_energy_j),
        reachability: col(&|t| t.reachability),
        retransmitting_nodes: col(&|t| t.retransmitting_nodes as f64),
        trials_aggregated: trials.len(),
    })
}
