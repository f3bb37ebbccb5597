//! Seeded randomized suites shared by the property and acceptance targets.
//! Each returns the number of cases checked, or a description of the first
//! counterexample.

#![allow(dead_code)]

use matrep_core::energy::{EnergyLedger, EnergyModel, RadioMode};
use matrep_core::metrics::{existence_ratio, SegmentSet, StorageSnapshot};
use matrep_core::protocol::deep::{DeepNodeState, DeepParams, DeepProtocol, DeepReception};
use matrep_core::protocol::uniform::{compute_rad, ExpireOutcome, Reception, UniformNodeState};
use matrep_core::protocol::{Capacity, DrawSource};
use matrep_core::sim::{RandomStream, StreamId};
use matrep_core::topology::{build_adjacency, place_uniform, NodeId, Position};
use matrep_core::{run_trial, Packet, PacketId, SimTime, Topology, TrialParams};

pub type SuiteResult = Result<usize, String>;

/// Draw source backed by one seeded stream.
pub struct Draws(pub RandomStream);

impl Draws {
    pub fn new(seed: u64) -> Self {
        Draws(RandomStream::new(seed, StreamId::Forwarding))
    }
}

impl DrawSource for Draws {
    fn rad(&mut self, t_max_ms: f64) -> f64 {
        self.0.uniform(0.0, t_max_ms)
    }
    fn storage(&mut self) -> f64 {
        self.0.unit()
    }
    fn forwarding(&mut self) -> f64 {
        self.0.unit()
    }
    fn jitter(&mut self, lo: f64, hi: f64) -> f64 {
        self.0.uniform(lo, hi)
    }
}

/// Always returns the same base draw.
struct Fixed(f64);

impl DrawSource for Fixed {
    fn rad(&mut self, t_max_ms: f64) -> f64 {
        self.0 * t_max_ms
    }
    fn storage(&mut self) -> f64 {
        self.0
    }
    fn forwarding(&mut self) -> f64 {
        self.0
    }
    fn jitter(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.0 * (hi - lo)
    }
}

fn packet(importance: f64, ns: bool, sender: u32) -> Packet {
    Packet {
        id: PacketId(7),
        data_item: 0,
        segment: 1,
        importance,
        ns,
        sender: NodeId(sender),
        payload_bytes: 32,
    }
}

fn pick<T: Copy>(rng: &mut RandomStream, xs: &[T]) -> T {
    xs[(rng.unit() * xs.len() as f64) as usize]
}

fn below(rng: &mut RandomStream, n: usize) -> usize {
    ((rng.unit() * n as f64) as usize).min(n - 1)
}

/// Scripted reception sequences against one uniform node, checked against a
/// shadow log of what the node was told.
pub fn uniform_scripted(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = RandomStream::new(seed, StreamId::Placement);
    let me = NodeId(0);
    for case in 0..cases {
        let options = [0.0, 1.0, rng.unit(), rng.unit()];
        let importance = pick(&mut rng, &options);
        let c_th = 1 + below(&mut rng, 6) as u32;
        let capacity = pick(&mut rng, &[Capacity::UNLIMITED, Capacity(Some(0)), Capacity(Some(3))]);
        let receptions = 1 + below(&mut rng, 10);
        let expire_after = 1 + below(&mut rng, receptions);
        let ns_rate = pick(&mut rng, &[0.0, 0.2, 0.5]);
        let u = rng.unit();

        let mut state = UniformNodeState::default();
        let mut shadow_counter = 0u32;
        let mut shadow_ns = false;
        let mut sends = 0usize;
        let fail = |what: &str| Err(format!("case {case}: {what}"));

        for i in 0..receptions {
            let p = packet(importance, rng.unit() < ns_rate, 1 + i as u32);
            let now = SimTime::from_ms(i as f64);
            let r = state.receive(&p, now, || 50.0);
            if i < expire_after {
                shadow_counter += 1;
                shadow_ns |= p.ns;
                match (i, r) {
                    (0, Reception::First { .. }) => {}
                    (0, other) => return fail(&format!("first copy gave {other:?}")),
                    (_, Reception::Duplicate { counter_n }) if counter_n == shadow_counter => {}
                    (_, other) => {
                        return fail(&format!("expected counter {shadow_counter}, got {other:?}"))
                    }
                }
            } else if r != Reception::Ignored {
                return fail(&format!("copy after expiry gave {r:?}"));
            }
            if i + 1 == expire_after {
                let pending = state.pending.get(&PacketId(7)).copied();
                if pending.map(|p| p.counter_n) != Some(shadow_counter) {
                    return fail("pending counter differs from the shadow log");
                }
                let Some(ExpireOutcome { stored, rebroadcast }) =
                    state.on_rad_expire(me, PacketId(7), c_th, capacity, || u)
                else {
                    return fail("expiry with a pending RAD returned nothing");
                };
                let expect_store = !shadow_ns
                    && capacity.has_room(&Default::default())
                    && importance > 0.0
                    && u <= importance;
                if stored != expect_store {
                    return fail(&format!("stored={stored}, expected {expect_store}"));
                }
                if shadow_ns && stored {
                    return fail("stored despite an ns=1 copy");
                }
                match rebroadcast {
                    Some(p) if stored && !p.ns => return fail("storer rebroadcast with ns=0"),
                    None if stored => return fail("storer did not rebroadcast"),
                    Some(p) if !stored && (p.ns || shadow_counter >= c_th) => {
                        return fail("non-storer broke the counter rule")
                    }
                    None if !stored && shadow_counter < c_th => {
                        return fail("counter below threshold but no rebroadcast")
                    }
                    Some(p) if p.sender != me || p.id != PacketId(7) => {
                        return fail("rebroadcast frame mislabeled")
                    }
                    _ => {}
                }
                sends += usize::from(rebroadcast.is_some());
                if state.on_rad_expire(me, PacketId(7), c_th, capacity, || u).is_some() {
                    return fail("second expiry acted again");
                }
            }
        }
        if sends > 1 {
            return fail("more than one rebroadcast");
        }
    }
    Ok(cases)
}

/// RAD scaling: for a fixed base draw, the delay grows with K and with the
/// base draw; it is K times the unextended delay.
pub fn rad_monotonicity(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = RandomStream::new(seed, StreamId::Rad);
    for case in 0..cases {
        let t_max = rng.uniform(1.0, 500.0);
        let (a, b) = (rng.unit(), rng.unit());
        let k1 = rng.uniform(1.0, 20.0);
        let k2 = k1 + rng.uniform(0.0, 20.0);
        let d1 = compute_rad(t_max, k1, &mut Fixed(a));
        let d2 = compute_rad(t_max, k2, &mut Fixed(a));
        let base = compute_rad(t_max, 1.0, &mut Fixed(a));
        if d2 < d1 {
            return Err(format!("case {case}: K {k1} -> {k2} shrank RAD {d1} -> {d2}"));
        }
        if (d1 - k1 * base).abs() > 1e-9 * d1.max(1.0) {
            return Err(format!("case {case}: RAD {d1} is not K x {base}"));
        }
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if compute_rad(t_max, k1, &mut Fixed(lo)) > compute_rad(t_max, k1, &mut Fixed(hi)) {
            return Err(format!("case {case}: RAD not monotone in the base draw"));
        }
        if !(0.0..t_max * k1 + 1e-9).contains(&d1) {
            return Err(format!("case {case}: RAD {d1} outside [0, t_max*K)"));
        }
    }
    Ok(cases)
}

/// Random interleavings of receptions and corrective expiries; a DEEP node
/// must never put more than one frame on air per packet.
pub fn deep_one_transmission(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = RandomStream::new(seed, StreamId::Jitter);
    let mut draws = Draws::new(seed ^ 0x5eed);
    let me = NodeId(0);
    for case in 0..cases {
        let params = DeepParams {
            beta: rng.uniform(0.5, 6.0),
            storage_p: rng.unit(),
            ..DeepParams::default()
        };
        let degree = below(&mut rng, 40);
        let mut state = DeepNodeState::default();
        let mut sends = 0;
        let mut stored_flags = 0;
        for step in 0..1 + below(&mut rng, 12) {
            let now = SimTime::from_ms(step as f64 * 10.0);
            if rng.unit() < 0.3 {
                sends += usize::from(state.on_corrective_expire(me, PacketId(7)).is_some());
                continue;
            }
            match state.on_receive(&packet(0.5, false, 1), now, degree, &params, &mut draws) {
                DeepReception::Forward { stored, .. } => {
                    sends += 1;
                    stored_flags += usize::from(stored);
                }
                DeepReception::Wait { stored, .. } => stored_flags += usize::from(stored),
                DeepReception::Echo { .. } => {}
            }
        }
        if sends > 1 {
            return Err(format!("case {case}: {sends} transmissions for one packet"));
        }
        if stored_flags > 1 || state.stored.len() > 1 {
            return Err(format!("case {case}: segment stored twice"));
        }
    }
    Ok(cases)
}

#[derive(Debug, Clone, Copy)]
pub struct MeanCheck {
    pub observed: f64,
    pub expected: f64,
    pub standard_error: f64,
}

impl MeanCheck {
    fn of(samples: &[f64], expected: f64) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        MeanCheck {
            observed: mean,
            expected,
            standard_error: (var / n).sqrt(),
        }
    }

    pub fn within(&self, k: f64) -> bool {
        (self.observed - self.expected).abs() <= k * self.standard_error.max(1e-12)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CliqueReport {
    pub trials: usize,
    pub forwards: MeanCheck,
    pub stored: MeanCheck,
}

/// DEEP over full engine trials on an `side x side` clique. The master's
/// frame reaches every other node at once, so the immediate forwards (the
/// ones before any corrective timer could fire) are Binomial(n-1, F).
pub fn deep_clique(seed: u64, trials: usize, side: usize, beta: f64, p: f64) -> CliqueReport {
    let topology = Topology::grid(side, side, 0.1, 0.5, 10.0);
    let n = topology.len();
    assert!(topology.nodes().all(|v| topology.degree(v) == n - 1));
    let params = TrialParams {
        segments: 1,
        t_end_ms: 1_000.0,
        ..TrialParams::default()
    };
    let protocol = DeepProtocol::new(DeepParams {
        beta,
        storage_p: p,
        ..DeepParams::default()
    });
    let cutoff = protocol.params.corrective_lo_ms;
    let mut forwards = Vec::with_capacity(trials);
    let mut stored = Vec::with_capacity(trials);
    for t in 0..trials {
        let r = run_trial(&protocol, &topology, &params, seed.wrapping_add(t as u64));
        let immediate = r
            .transmissions
            .iter()
            .filter(|x| !x.origination && x.start.ms() < cutoff)
            .count();
        forwards.push(immediate as f64);
        stored.push(r.stored.iter().filter(|s| s.contains(0)).count() as f64);
    }
    let m = (n - 1) as f64;
    CliqueReport {
        trials,
        forwards: MeanCheck::of(&forwards, m * (beta / m).min(1.0)),
        stored: MeanCheck::of(&stored, 1.0 + m * p),
    }
}

fn random_snapshot(rng: &mut RandomStream, segments: u16) -> StorageSnapshot {
    let rows = 1 + below(rng, 10);
    let cols = 1 + below(rng, 10);
    let density = rng.unit();
    let stored = (0..rows * cols)
        .map(|_| {
            (0..segments)
                .filter(|_| rng.unit() < density)
                .collect::<SegmentSet>()
        })
        .collect();
    StorageSnapshot::grid(rows, cols, stored)
}

fn brute_existence(snap: &StorageSnapshot, window: usize, segments: u16) -> f64 {
    let g = snap.grid.unwrap();
    let h = (window / 2) as i64;
    let mut covered = 0;
    for r in 0..g.rows as i64 {
        for c in 0..g.cols as i64 {
            let mut union = SegmentSet::EMPTY;
            for rr in r - h..=r + h {
                for cc in c - h..=c + h {
                    if (0..g.rows as i64).contains(&rr) && (0..g.cols as i64).contains(&cc) {
                        union.0 |= snap.stored[rr as usize * g.cols + cc as usize].0;
                    }
                }
            }
            if union.is_superset(SegmentSet::full(segments)) {
                covered += 1;
            }
        }
    }
    covered as f64 / g.len() as f64
}

/// Windowed existence ratio equals a direct window sweep on random grids.
pub fn existence_oracle(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = RandomStream::new(seed, StreamId::StorageDraw);
    for case in 0..cases {
        let segments = 1 + below(&mut rng, 4) as u16;
        let window = pick(&mut rng, &[1, 3, 5, 7, 9]);
        let snap = random_snapshot(&mut rng, segments);
        let fast = existence_ratio(&snap, window, segments).map_err(|e| e.to_string())?;
        let slow = brute_existence(&snap, window, segments);
        if fast != slow {
            return Err(format!("case {case}: {fast} vs oracle {slow} ({snap:?})"));
        }
    }
    Ok(cases)
}

/// Adding a stored segment anywhere never lowers the existence ratio.
pub fn existence_monotonicity(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = RandomStream::new(seed, StreamId::Placement);
    for case in 0..cases {
        let segments = 1 + below(&mut rng, 4) as u16;
        let window = pick(&mut rng, &[1, 3, 5]);
        let mut snap = random_snapshot(&mut rng, segments);
        let before = existence_ratio(&snap, window, segments).map_err(|e| e.to_string())?;
        let node = below(&mut rng, snap.stored.len());
        snap.stored[node].insert(below(&mut rng, segments as usize) as u16);
        let after = existence_ratio(&snap, window, segments).map_err(|e| e.to_string())?;
        if after < before {
            return Err(format!("case {case}: ratio fell {before} -> {after}"));
        }
    }
    Ok(cases)
}

/// Random charge sequences: the ledger's consumption equals an independent
/// running sum of mode currents, clamped at each node's battery, and K never
/// decreases as a node drains.
pub fn energy_ledger(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = RandomStream::new(seed, StreamId::InitialEnergy);
    let (v, i_tx, i_rx, i_idle) = (3.0, 10.35e-3, 13.32e-3, 0.688e-3);
    let model = EnergyModel::default();
    for case in 0..cases {
        let nodes = 1 + below(&mut rng, 5);
        let e_initial = pick(&mut rng, &[0.01, 0.1, 100.0]);
        let levels: Vec<f64> = (0..nodes)
            .map(|_| e_initial * rng.uniform(0.05, 1.0).max(1e-6))
            .collect();
        let mut ledger = EnergyLedger::with_levels(model, e_initial, levels.clone());
        let mut shadow = vec![0.0f64; nodes];
        let mut taken = vec![0.0f64; nodes];
        let mut last_k: Vec<f64> = (0..nodes).map(|i| e_initial / levels[i]).collect();
        for _ in 0..below(&mut rng, 60) {
            let i = below(&mut rng, nodes);
            let node = NodeId(i as u32);
            let ms = rng.uniform(0.0, 2_000.0);
            let (mode, amps) = pick(
                &mut rng,
                &[(RadioMode::Tx, i_tx), (RadioMode::Rx, i_rx), (RadioMode::Idle, i_idle)],
            );
            shadow[i] += v * amps * ms / 1000.0;
            taken[i] += ledger.charge(node, mode, SimTime::from_ms(ms));
            let expect = shadow[i].min(levels[i]);
            let tol = 1e-9 * levels[i].max(1.0);
            if (ledger.consumed(node) - expect).abs() > tol || (taken[i] - expect).abs() > tol {
                return Err(format!(
                    "case {case}: consumed {} / returned {} vs shadow {expect}",
                    ledger.consumed(node),
                    taken[i]
                ));
            }
            if ledger.remainder(node) < 0.0 {
                return Err(format!("case {case}: negative remainder"));
            }
            if ledger.is_alive(node) {
                let k = ledger.k_factor(node);
                if k < last_k[i] || k < 1.0 {
                    return Err(format!("case {case}: K went {} -> {k}", last_k[i]));
                }
                last_k[i] = k;
            }
        }
    }
    Ok(cases)
}

/// Bucketed adjacency equals the O(n^2) unit-disk graph on random 3-D
/// placements, and is symmetric.
pub fn adjacency_oracle(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = RandomStream::new(seed, StreamId::Placement);
    for case in 0..cases {
        let count = 1 + below(&mut rng, 150);
        let range = rng.uniform(0.2, 4.0);
        let mut pts = place_uniform(count, 12.0, 9.0, 0.0, &mut rng);
        for p in &mut pts {
            p.z = rng.uniform(0.0, 3.0);
        }
        let adj = build_adjacency(&pts, range);
        for i in 0..count {
            let oracle: Vec<NodeId> = (0..count)
                .filter(|&j| j != i && dist(&pts[i], &pts[j]) <= range + 1e-9)
                .map(|j| NodeId(j as u32))
                .collect();
            if adj[i] != oracle {
                return Err(format!("case {case}: node {i} neighbors differ"));
            }
            if adj[i].iter().any(|j| !adj[j.index()].contains(&NodeId(i as u32))) {
                return Err(format!("case {case}: asymmetric adjacency at {i}"));
            }
        }
    }
    Ok(cases)
}

fn dist(a: &Position, b: &Position) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
}
