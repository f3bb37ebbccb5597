//! One dissemination run: the master injects every segment, nodes react
//! through their protocol state machine, and the radio layer resolves
//! collisions and energy.

use crate::energy::{EnergyLedger, EnergyModel, RadioMode};
use crate::metrics::SegmentSet;
use crate::packet::{Packet, PacketId};
use crate::protocol::{Action, NodeCtx, Protocol, ProtocolKind, Timer};
use crate::sim::{Event, EventKind, SimTime, Simulation, TrialStreams};
use crate::topology::{deliver, GridDims, NodeId, RadioParams, Topology, Transmission, TxId};

/// Trial-level settings shared by both protocols.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialParams {
    pub radio: RadioParams,
    pub energy: EnergyModel,
    pub e_initial_j: f64,
    /// Nodes start with charge drawn from `[initial_level_min, 1) * e_initial`;
    /// `1.0` means every battery is full.
    pub initial_level_min: f64,
    pub segments: u16,
    pub stagger_ms: f64,
    pub importance: f64,
    pub t_end_ms: f64,
    /// Defer while a neighbor is on air, then back off for `U[0, backoff_ms)`.
    pub carrier_sense: bool,
    pub backoff_ms: f64,
}

impl Default for TrialParams {
    fn default() -> Self {
        Self {
            radio: RadioParams::default(),
            energy: EnergyModel::default(),
            e_initial_j: 100.0,
            initial_level_min: 1.0,
            segments: 3,
            stagger_ms: 1000.0,
            importance: 0.5,
            t_end_ms: 100_000.0,
            carrier_sense: false,
            backoff_ms: 10.0,
        }
    }
}

/// One frame put on air.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxRecord {
    pub node: NodeId,
    pub packet: PacketId,
    pub segment: u16,
    pub ns: bool,
    pub start: SimTime,
    /// Injected by the master rather than relayed.
    pub origination: bool,
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub segments: u16,
    pub master: NodeId,
    pub grid: Option<GridDims>,
    pub stored: Vec<SegmentSet>,
    pub seen: Vec<SegmentSet>,
    pub consumed_j: Vec<f64>,
    pub alive: Vec<bool>,
    pub transmissions: Vec<TxRecord>,
    pub collisions: u64,
    pub events: u64,
}

impl TrialResult {
    pub fn node_count(&self) -> usize {
        self.stored.len()
    }

    /// Nodes that relayed at least one frame (master injections excluded).
    pub fn retransmitting_nodes(&self) -> usize {
        let mut relayed = vec![false; self.node_count()];
        for t in self.transmissions.iter().filter(|t| !t.origination) {
            relayed[t.node.index()] = true;
        }
        relayed.into_iter().filter(|&r| r).count()
    }

    pub fn average_consumed_j(&self) -> f64 {
        if self.consumed_j.is_empty() {
            return 0.0;
        }
        self.consumed_j.iter().sum::<f64>() / self.consumed_j.len() as f64
    }
}

struct Engine<'a, P: Protocol> {
    protocol: &'a P,
    topology: &'a Topology,
    params: &'a TrialParams,
    streams: TrialStreams,
    ledger: EnergyLedger,
    states: Vec<P::State>,
    radio_busy_until: Vec<SimTime>,
    busy_ms: Vec<f64>,
    txs: Vec<Transmission>,
    overlaps: Vec<Vec<TxId>>,
    on_air: Vec<TxId>,
    records: Vec<TxRecord>,
    collisions: u64,
    actions: Vec<Action>,
}

impl<'a, P: Protocol> Engine<'a, P> {
    fn new(protocol: &'a P, topology: &'a Topology, params: &'a TrialParams, seed: u64) -> Self {
        let n = topology.len();
        let mut streams = TrialStreams::new(seed);
        let ledger = if params.initial_level_min < 1.0 {
            let levels = (0..n)
                .map(|_| {
                    params.e_initial_j
                        * streams.initial_energy.uniform(params.initial_level_min, 1.0)
                })
                .collect();
            EnergyLedger::with_levels(params.energy, params.e_initial_j, levels)
        } else {
            EnergyLedger::new(params.energy, params.e_initial_j, n)
        };
        Self {
            protocol,
            topology,
            params,
            streams,
            ledger,
            states: vec![P::State::default(); n],
            radio_busy_until: vec![SimTime::ZERO; n],
            busy_ms: vec![0.0; n],
            txs: Vec::new(),
            overlaps: Vec::new(),
            on_air: Vec::new(),
            records: Vec::new(),
            collisions: 0,
            actions: Vec::new(),
        }
    }

    fn handle(&mut self, sim: &mut Simulation, ev: Event) {
        let node = ev.node;
        match ev.kind {
            EventKind::DisseminateSegment(packet) => {
                let frame = self
                    .protocol
                    .originate(node, &mut self.states[node.index()], packet);
                self.start_tx(sim, node, frame, true);
            }
            EventKind::TxStart(packet) => self.start_tx(sim, node, packet, false),
            EventKind::TxEnd(id) => self.end_tx(sim, id),
            EventKind::RxDeliver(id) => {
                if !self.ledger.is_alive(node) {
                    return;
                }
                let packet = self.txs[id.0 as usize].packet;
                let mut out = std::mem::take(&mut self.actions);
                let mut ctx = NodeCtx {
                    node,
                    now: sim.now(),
                    degree: self.topology.degree(node),
                    k: self.k_of(node),
                    draws: &mut self.streams,
                };
                self.protocol
                    .on_receive(&mut ctx, &mut self.states[node.index()], &packet, &mut out);
                self.apply(sim, node, &mut out);
                self.actions = out;
            }
            EventKind::RadExpire(pid) => self.timer(sim, node, Timer::Rad(pid)),
            EventKind::CorrectiveExpire(pid) => self.timer(sim, node, Timer::Corrective(pid)),
        }
    }

    fn k_of(&self, node: NodeId) -> f64 {
        if self.ledger.is_alive(node) {
            self.ledger.k_factor(node)
        } else {
            1.0
        }
    }

    fn timer(&mut self, sim: &mut Simulation, node: NodeId, timer: Timer) {
        if !self.ledger.is_alive(node) {
            return;
        }
        let mut out = std::mem::take(&mut self.actions);
        let mut ctx = NodeCtx {
            node,
            now: sim.now(),
            degree: self.topology.degree(node),
            k: self.k_of(node),
            draws: &mut self.streams,
        };
        self.protocol
            .on_timer(&mut ctx, &mut self.states[node.index()], timer, &mut out);
        self.apply(sim, node, &mut out);
        self.actions = out;
    }

    fn apply(&mut self, sim: &mut Simulation, node: NodeId, out: &mut Vec<Action>) {
        for action in out.drain(..) {
            match action {
                Action::Transmit(p) => self.start_tx(sim, node, p, false),
                Action::TransmitAt(at, p) => {
                    sim.schedule(at, node, EventKind::TxStart(p));
                }
                Action::ArmRad(at, pid) => {
                    sim.schedule(at, node, EventKind::RadExpire(pid));
                }
                Action::ArmCorrective(at, pid) => {
                    sim.schedule(at, node, EventKind::CorrectiveExpire(pid));
                }
            }
        }
    }

    fn start_tx(&mut self, sim: &mut Simulation, node: NodeId, packet: Packet, origination: bool) {
        if !self.ledger.is_alive(node) {
            return;
        }
        let now = sim.now();
        let busy_until = self.radio_busy_until[node.index()];
        if busy_until > now {
            // one frame at a time per radio; queue behind the current one
            let kind = if origination {
                EventKind::DisseminateSegment(packet)
            } else {
                EventKind::TxStart(packet)
            };
            sim.schedule(busy_until, node, kind);
            return;
        }
        if self.params.carrier_sense {
            let busy = self
                .on_air
                .iter()
                .map(|t| self.txs[t.0 as usize])
                .filter(|t| self.topology.are_neighbors(t.sender, node))
                .map(|t| t.end)
                .max();
            if let Some(end) = busy {
                let backoff = self.streams.jitter.uniform(0.0, self.params.backoff_ms);
                let kind = if origination {
                    EventKind::DisseminateSegment(packet)
                } else {
                    EventKind::TxStart(packet)
                };
                sim.schedule(end.after(backoff), node, kind);
                return;
            }
        }
        let airtime = self.params.radio.airtime_ms(packet.payload_bytes);
        let id = TxId(self.txs.len() as u32);
        let tx = Transmission {
            id,
            sender: node,
            packet,
            start: now,
            end: now.after(airtime),
        };
        self.txs.push(tx);
        self.overlaps.push(Vec::new());
        for &other in &self.on_air {
            self.overlaps[other.0 as usize].push(id);
            self.overlaps[id.0 as usize].push(other);
        }
        self.on_air.push(id);
        self.radio_busy_until[node.index()] = tx.end;
        self.ledger
            .charge(node, RadioMode::Tx, SimTime::from_ms(airtime));
        self.busy_ms[node.index()] += airtime;
        self.records.push(TxRecord {
            node,
            packet: packet.id,
            segment: packet.segment,
            ns: packet.ns,
            start: now,
            origination,
        });
        sim.schedule(tx.end, node, EventKind::TxEnd(id));
    }

    fn end_tx(&mut self, sim: &mut Simulation, id: TxId) {
        self.on_air.retain(|&t| t != id);
        let tx = self.txs[id.0 as usize];
        let mut window: Vec<Transmission> = self.overlaps[id.0 as usize]
            .iter()
            .map(|o| self.txs[o.0 as usize])
            .filter(|o| o.overlaps(&tx))
            .collect();
        window.push(tx);
        let receivers = deliver(&tx, &window, self.topology);
        let airtime = tx.end.ms() - tx.start.ms();
        let mut r = receivers.iter().peekable();
        for &n in self.topology.neighbors(tx.sender) {
            let received = r.peek() == Some(&&n);
            if received {
                r.next();
            }
            // a node that was itself sending was not listening
            let listening = !window.iter().any(|o| o.sender == n);
            if !listening || !self.ledger.is_alive(n) {
                continue;
            }
            self.ledger
                .charge(n, RadioMode::Rx, SimTime::from_ms(airtime));
            self.busy_ms[n.index()] += airtime;
            if received {
                sim.schedule(tx.end, n, EventKind::RxDeliver(id));
            } else {
                self.collisions += 1;
            }
        }
    }

    fn finish(mut self, sim: &Simulation, seed: u64) -> TrialResult {
        let t_end = self.params.t_end_ms;
        for node in self.topology.nodes() {
            if self.ledger.is_alive(node) {
                let idle = (t_end - self.busy_ms[node.index()]).max(0.0);
                self.ledger
                    .charge(node, RadioMode::Idle, SimTime::from_ms(idle));
            }
        }
        let segs = self.params.segments;
        let mask_of = |state: &P::State| {
            let mut seen = SegmentSet::EMPTY;
            for s in 0..segs {
                if P::has_seen(state, PacketId(u32::from(s))) {
                    seen.insert(s);
                }
            }
            seen
        };
        TrialResult {
            protocol: self.protocol.kind(),
            seed,
            segments: segs,
            master: self.topology.master(),
            grid: self.topology.grid_dims(),
            stored: self
                .states
                .iter()
                .map(|s| P::stored(s).iter().map(|k| k.segment).collect())
                .collect(),
            seen: self.states.iter().map(mask_of).collect(),
            consumed_j: self.topology.nodes().map(|n| self.ledger.consumed(n)).collect(),
            alive: self.topology.nodes().map(|n| self.ledger.is_alive(n)).collect(),
            transmissions: self.records,
            collisions: self.collisions,
            events: sim.processed(),
        }
    }
}

/// Runs one seeded trial of `protocol` over `topology`.
pub fn run_trial<P: Protocol>(
    protocol: &P,
    topology: &Topology,
    params: &TrialParams,
    seed: u64,
) -> TrialResult {
    assert!(params.segments >= 1, "need at least one segment");
    let mut engine = Engine::new(protocol, topology, params, seed);
    let mut sim = Simulation::new();
    let master = topology.master();
    for s in 0..params.segments {
        let packet = Packet {
            id: PacketId(u32::from(s)),
            data_item: 0,
            segment: s,
            importance: params.importance,
            ns: false,
            sender: master,
            payload_bytes: params.radio.payload_bytes,
        };
        sim.schedule(
            SimTime::from_ms(f64::from(s) * params.stagger_ms),
            master,
            EventKind::DisseminateSegment(packet),
        );
    }
    sim.run_until(SimTime::from_ms(params.t_end_ms), |sim, ev| engine.handle(sim, ev));
    engine.finish(&sim, seed)
}
