//! DEEP baseline: RAPID density-sensitive probabilistic forwarding with a
//! corrective rebroadcast timer, plus independent per-node storage.

use std::collections::{BTreeMap, BTreeSet};

use super::{Action, Capacity, DrawSource, NodeCtx, Protocol, ProtocolKind, Timer};
use crate::packet::{Packet, PacketId, SegmentKey};
use crate::sim::SimTime;
use crate::topology::NodeId;

/// `min(1, beta / degree)`; an isolated node forwards with probability 1.
pub fn forward_probability(beta: f64, degree: usize) -> f64 {
    if degree == 0 {
        1.0
    } else {
        (beta / degree as f64).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeepParams {
    /// Desired average number of retransmissions per neighborhood.
    pub beta: f64,
    pub storage_p: f64,
    pub corrective_lo_ms: f64,
    pub corrective_hi_ms: f64,
    /// Upper bound of the delay applied to "immediate" forwards.
    pub jitter_ms: f64,
    pub capacity: Capacity,
}

impl Default for DeepParams {
    fn default() -> Self {
        Self {
            beta: 2.0,
            storage_p: 0.5,
            corrective_lo_ms: 200.0,
            corrective_hi_ms: 400.0,
            jitter_ms: 5.0,
            capacity: Capacity::UNLIMITED,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DeepNodeState {
    pub seen: BTreeSet<PacketId>,
    pub stored: BTreeSet<SegmentKey>,
    pub awaiting_echo: BTreeMap<PacketId, (SimTime, Packet)>,
    pub heard_echo: BTreeSet<PacketId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeepReception {
    /// First copy; rebroadcast at `at`.
    Forward { at: SimTime, stored: bool },
    /// First copy; corrective timer armed.
    Wait { deadline: SimTime, stored: bool },
    /// A further copy. `cancelled` is set when it disarmed a corrective timer.
    Echo { cancelled: bool },
}

impl DeepNodeState {
    pub fn on_receive<D: DrawSource + ?Sized>(
        &mut self,
        packet: &Packet,
        now: SimTime,
        degree: usize,
        params: &DeepParams,
        draws: &mut D,
    ) -> DeepReception {
        if !self.seen.insert(packet.id) {
            let cancelled = self.awaiting_echo.remove(&packet.id).is_some();
            self.heard_echo.insert(packet.id);
            return DeepReception::Echo { cancelled };
        }
        let mut stored = false;
        if params.capacity.has_room(&self.stored) {
            let u = draws.storage();
            if params.storage_p > 0.0 && u <= params.storage_p {
                self.stored.insert(packet.key());
                stored = true;
            }
        }
        let f = forward_probability(params.beta, degree);
        if draws.forwarding() < f {
            let at = now.after(draws.jitter(0.0, params.jitter_ms));
            DeepReception::Forward { at, stored }
        } else {
            let deadline = now.after(draws.jitter(params.corrective_lo_ms, params.corrective_hi_ms));
            self.awaiting_echo.insert(packet.id, (deadline, *packet));
            DeepReception::Wait { deadline, stored }
        }
    }

    /// Returns the frame to send if the timer is still armed.
    pub fn on_corrective_expire(&mut self, node: NodeId, packet_id: PacketId) -> Option<Packet> {
        self.awaiting_echo
            .remove(&packet_id)
            .map(|(_, p)| p.relayed(node, false))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeepProtocol {
    pub params: DeepParams,
}

impl DeepProtocol {
    pub fn new(params: DeepParams) -> Self {
        Self { params }
    }
}

impl Protocol for DeepProtocol {
    type State = DeepNodeState;

    fn kind(&self) -> ProtocolKind {
        ProtocolKind::Deep
    }

    fn originate(&self, node: NodeId, state: &mut DeepNodeState, packet: Packet) -> Packet {
        state.seen.insert(packet.id);
        if self.params.capacity.has_room(&state.stored) {
            state.stored.insert(packet.key());
        }
        packet.relayed(node, false)
    }

    fn on_receive<D: DrawSource + ?Sized>(
        &self,
        ctx: &mut NodeCtx<'_, D>,
        state: &mut DeepNodeState,
        packet: &Packet,
        out: &mut Vec<Action>,
    ) {
        match state.on_receive(packet, ctx.now, ctx.degree, &self.params, ctx.draws) {
            DeepReception::Forward { at, .. } => {
                out.push(Action::TransmitAt(at, packet.relayed(ctx.node, false)))
            }
            DeepReception::Wait { deadline, .. } => {
                out.push(Action::ArmCorrective(deadline, packet.id))
            }
            DeepReception::Echo { .. } => {}
        }
    }

    fn on_timer<D: DrawSource + ?Sized>(
        &self,
        ctx: &mut NodeCtx<'_, D>,
        state: &mut DeepNodeState,
        timer: Timer,
        out: &mut Vec<Action>,
    ) {
        if let Timer::Corrective(pid) = timer {
            if let Some(p) = state.on_corrective_expire(ctx.node, pid) {
                out.push(Action::Transmit(p));
            }
        }
    }

    fn has_seen(state: &DeepNodeState, packet: PacketId) -> bool {
        state.seen.contains(&packet)
    }

    fn stored(state: &DeepNodeState) -> &BTreeSet<SegmentKey> {
        &state.stored
    }
}
