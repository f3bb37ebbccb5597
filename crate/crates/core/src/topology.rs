//! Node placement, unit-disk neighborhoods and the broadcast collision rule.

use std::collections::HashMap;
use std::fmt;

use crate::packet::Packet;
use crate::sim::{RandomStream, SimTime};

/// Slack on the inclusive range test so lattice distances that are exact in
/// real arithmetic stay in range after floating-point rounding.
const RANGE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dist2(&self, other: &Position) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        dx * dx + dy * dy + dz * dz
    }

    pub fn dist(&self, other: &Position) -> f64 {
        self.dist2(other).sqrt()
    }
}

/// Row-major grid layout: node `r * cols + c` sits in row `r`, column `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridDims {
    pub rows: usize,
    pub cols: usize,
}

impl GridDims {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, node: NodeId) -> (usize, usize) {
        (node.index() / self.cols, node.index() % self.cols)
    }
}

/// `rows * cols` nodes at `(r * spacing, c * spacing, z)`, row-major ids.
pub fn place_grid(rows: usize, cols: usize, spacing: f64, z: f64) -> Vec<Position> {
    assert!(rows >= 1 && cols >= 1, "grid needs at least one row and column");
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(Position::new(r as f64 * spacing, c as f64 * spacing, z));
        }
    }
    out
}

/// `count` nodes uniformly scattered over `[0, lx) x [0, ly)` at height `z`.
pub fn place_uniform(
    count: usize,
    lx: f64,
    ly: f64,
    z: f64,
    rng: &mut RandomStream,
) -> Vec<Position> {
    (0..count)
        .map(|_| Position::new(rng.uniform(0.0, lx), rng.uniform(0.0, ly), z))
        .collect()
}

/// Symmetric unit-disk adjacency: `j` is a neighbor of `i` iff `i != j` and
/// their distance is at most `comm_range`. Lists are sorted by id.
pub fn build_adjacency(positions: &[Position], comm_range: f64) -> Vec<Vec<NodeId>> {
    assert!(comm_range > 0.0, "comm_range must be positive");
    let reach = comm_range + RANGE_EPS;
    let reach2 = reach * reach;
    let cell_of = |p: &Position| {
        (
            (p.x / comm_range).floor() as i64,
            (p.y / comm_range).floor() as i64,
            (p.z / comm_range).floor() as i64,
        )
    };
    let mut buckets: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in positions.iter().enumerate() {
        buckets.entry(cell_of(p)).or_default().push(i);
    }
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (cx, cy, cz) = cell_of(p);
            let mut adj = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(bucket) = buckets.get(&(cx + dx, cy + dy, cz + dz)) else {
                            continue;
                        };
                        for &j in bucket {
                            if j != i && p.dist2(&positions[j]) <= reach2 {
                                adj.push(NodeId(j as u32));
                            }
                        }
                    }
                }
            }
            adj.sort_unstable();
            adj
        })
        .collect()
}

/// Node closest to the centroid of all positions; ties go to the lowest id.
pub fn select_master(positions: &[Position]) -> NodeId {
    assert!(!positions.is_empty(), "no nodes to choose a master from");
    let n = positions.len() as f64;
    let centroid = Position::new(
        positions.iter().map(|p| p.x).sum::<f64>() / n,
        positions.iter().map(|p| p.y).sum::<f64>() / n,
        positions.iter().map(|p| p.z).sum::<f64>() / n,
    );
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in positions.iter().enumerate() {
        let d = p.dist2(&centroid);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    NodeId(best as u32)
}

#[derive(Debug, Clone)]
pub struct Topology {
    positions: Vec<Position>,
    comm_range: f64,
    adjacency: Vec<Vec<NodeId>>,
    master: NodeId,
    grid: Option<GridDims>,
}

impl Topology {
    pub fn new(positions: Vec<Position>, comm_range: f64, grid: Option<GridDims>) -> Self {
        if let Some(g) = grid {
            assert_eq!(g.len(), positions.len(), "grid dims do not match node count");
        }
        let adjacency = build_adjacency(&positions, comm_range);
        let master = select_master(&positions);
        Self {
            positions,
            comm_range,
            adjacency,
            master,
            grid,
        }
    }

    pub fn grid(rows: usize, cols: usize, spacing: f64, z: f64, comm_range: f64) -> Self {
        Self::new(
            place_grid(rows, cols, spacing, z),
            comm_range,
            Some(GridDims { rows, cols }),
        )
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.positions.len() as u32).map(NodeId)
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn position(&self, node: NodeId) -> Position {
        self.positions[node.index()]
    }

    pub fn comm_range(&self) -> f64 {
        self.comm_range
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node.index()]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node.index()].len()
    }

    pub fn mean_degree(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.adjacency.iter().map(Vec::len).sum::<usize>() as f64 / self.len() as f64
    }

    pub fn are_neighbors(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a.index()].binary_search(&b).is_ok()
    }

    pub fn master(&self) -> NodeId {
        self.master
    }

    pub fn grid_dims(&self) -> Option<GridDims> {
        self.grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxId(pub u32);

/// Radio frame timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    pub payload_bytes: u32,
    pub header_bytes: u32,
    pub bandwidth_kbps: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            payload_bytes: 32,
            header_bytes: 8,
            bandwidth_kbps: 50.0,
        }
    }
}

impl RadioParams {
    /// Frame airtime in milliseconds (bits / kbps).
    pub fn airtime_ms(&self, payload_bytes: u32) -> f64 {
        f64::from(payload_bytes + self.header_bytes) * 8.0 / self.bandwidth_kbps
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    pub id: TxId,
    pub sender: NodeId,
    pub packet: Packet,
    pub start: SimTime,
    pub end: SimTime,
}

impl Transmission {
    pub fn overlaps(&self, other: &Transmission) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Neighbors of `tx.sender` that decode `tx`.
///
/// A neighbor `n` loses the frame when any other transmission in `active`
/// overlaps `tx` in time and is sent either by `n` itself (half duplex) or by
/// one of `n`'s neighbors. Losses are silent.
pub fn deliver(tx: &Transmission, active: &[Transmission], topology: &Topology) -> Vec<NodeId> {
    let interferers: Vec<&Transmission> = active
        .iter()
        .filter(|t| t.id != tx.id && t.overlaps(tx))
        .collect();
    topology
        .neighbors(tx.sender)
        .iter()
        .copied()
        .filter(|&n| {
            !interferers
                .iter()
                .any(|t| t.sender == n || topology.are_neighbors(t.sender, n))
        })
        .collect()
}
