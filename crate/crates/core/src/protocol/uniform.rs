//! Energy-aware counter-based flooding with NS-controlled probabilistic
//! storage.
//!
//! A node that hears a segment for the first time starts a counter at one and
//! waits a random assessment delay (RAD) stretched by its battery level.
//! Duplicates bump the counter; any copy carrying `ns = 1` means a neighbor
//! already stored the segment, which cancels this node's own storage
//! decision. At expiry the node either stores (and then always rebroadcasts
//! with `ns = 1`) or falls back to the plain counter rule.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{Action, Capacity, DrawSource, NodeCtx, Protocol, ProtocolKind, Timer};
use crate::packet::{Packet, PacketId, SegmentKey};
use crate::sim::SimTime;
use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("importance {0} outside [0, 1]")]
pub struct InvalidImportance(pub f64);

/// Importance level to storage probability (identity on `[0, 1]`).
pub fn storage_probability(importance: f64) -> Result<f64, InvalidImportance> {
    if (0.0..=1.0).contains(&importance) {
        Ok(importance)
    } else {
        Err(InvalidImportance(importance))
    }
}

/// `RAD * K` with `RAD ~ U[0, t_max)`.
pub fn compute_rad<D: DrawSource + ?Sized>(t_max_ms: f64, k: f64, draws: &mut D) -> f64 {
    debug_assert!(k >= 1.0);
    draws.rad(t_max_ms) * k
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformParams {
    pub c_th: u32,
    pub t_max_ms: f64,
    pub energy_extension: bool,
    pub capacity: Capacity,
}

impl Default for UniformParams {
    fn default() -> Self {
        Self {
            c_th: 4,
            t_max_ms: 200.0,
            energy_extension: true,
            capacity: Capacity::UNLIMITED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingBroadcast {
    pub packet: Packet,
    pub counter_n: u32,
    pub rad_deadline: SimTime,
    pub storage_cancelled: bool,
    pub ns_out: bool,
}

#[derive(Debug, Clone, Default)]
pub struct UniformNodeState {
    pub seen: BTreeSet<PacketId>,
    pub stored: BTreeSet<SegmentKey>,
    pub pending: BTreeMap<PacketId, PendingBroadcast>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reception {
    First { rad_deadline: SimTime },
    Duplicate { counter_n: u32 },
    /// Already handled and its RAD has expired.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpireOutcome {
    pub stored: bool,
    /// Frame to rebroadcast, if any; `ns` is already set.
    pub rebroadcast: Option<Packet>,
}

impl UniformNodeState {
    /// Routes a reception to first-time or duplicate handling. `rad_delay` is
    /// only evaluated for first receptions.
    pub fn receive(
        &mut self,
        packet: &Packet,
        now: SimTime,
        rad_delay: impl FnOnce() -> f64,
    ) -> Reception {
        if self.seen.contains(&packet.id) {
            match self.on_duplicate(packet) {
                Some(counter_n) => Reception::Duplicate { counter_n },
                None => Reception::Ignored,
            }
        } else {
            Reception::First {
                rad_deadline: self.on_first_receive(packet, now, rad_delay()),
            }
        }
    }

    pub fn on_first_receive(&mut self, packet: &Packet, now: SimTime, rad_ms: f64) -> SimTime {
        debug_assert!(!self.seen.contains(&packet.id));
        self.seen.insert(packet.id);
        let rad_deadline = now.after(rad_ms);
        self.pending.insert(
            packet.id,
            PendingBroadcast {
                packet: *packet,
                counter_n: 1,
                rad_deadline,
                storage_cancelled: packet.ns,
                ns_out: false,
            },
        );
        rad_deadline
    }

    /// Returns the new counter, or `None` when no RAD is pending.
    pub fn on_duplicate(&mut self, packet: &Packet) -> Option<u32> {
        let p = self.pending.get_mut(&packet.id)?;
        p.counter_n += 1;
        if packet.ns {
            p.storage_cancelled = true;
        }
        Some(p.counter_n)
    }

    /// Storage / rebroadcast decision at RAD expiry. `storage_draw` is only
    /// evaluated when the storage decision is still open.
    pub fn on_rad_expire(
        &mut self,
        node: NodeId,
        packet_id: PacketId,
        c_th: u32,
        capacity: Capacity,
        storage_draw: impl FnOnce() -> f64,
    ) -> Option<ExpireOutcome> {
        let mut pending = self.pending.remove(&packet_id)?;
        let can_store = !pending.storage_cancelled && capacity.has_room(&self.stored);
        // A node at capacity never stores; treat it like a cancelled decision.
        let p = storage_probability(pending.packet.importance).unwrap_or(0.0);
        let store = can_store && storage_draw() <= p && p > 0.0;
        if store {
            self.stored.insert(pending.packet.key());
            pending.ns_out = true;
            return Some(ExpireOutcome {
                stored: true,
                rebroadcast: Some(pending.packet.relayed(node, true)),
            });
        }
        let rebroadcast =
            (pending.counter_n < c_th).then(|| pending.packet.relayed(node, pending.ns_out));
        Some(ExpireOutcome {
            stored: false,
            rebroadcast,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UniformProtocol {
    pub params: UniformParams,
}

impl UniformProtocol {
    pub fn new(params: UniformParams) -> Self {
        Self { params }
    }
}

impl Protocol for UniformProtocol {
    type State = UniformNodeState;

    fn kind(&self) -> ProtocolKind {
        ProtocolKind::Uniform
    }

    fn originate(&self, node: NodeId, state: &mut UniformNodeState, packet: Packet) -> Packet {
        state.seen.insert(packet.id);
        let ns = self.params.capacity.has_room(&state.stored);
        if ns {
            state.stored.insert(packet.key());
        }
        packet.relayed(node, ns)
    }

    fn on_receive<D: DrawSource + ?Sized>(
        &self,
        ctx: &mut NodeCtx<'_, D>,
        state: &mut UniformNodeState,
        packet: &Packet,
        out: &mut Vec<Action>,
    ) {
        let k = if self.params.energy_extension { ctx.k } else { 1.0 };
        let t_max = self.params.t_max_ms;
        let draws = &mut *ctx.draws;
        if let Reception::First { rad_deadline } =
            state.receive(packet, ctx.now, || compute_rad(t_max, k, draws))
        {
            out.push(Action::ArmRad(rad_deadline, packet.id));
        }
    }

    fn on_timer<D: DrawSource + ?Sized>(
        &self,
        ctx: &mut NodeCtx<'_, D>,
        state: &mut UniformNodeState,
        timer: Timer,
        out: &mut Vec<Action>,
    ) {
        let Timer::Rad(pid) = timer else {
            return;
        };
        let draws = &mut *ctx.draws;
        let outcome = state.on_rad_expire(
            ctx.node,
            pid,
            self.params.c_th,
            self.params.capacity,
            || draws.storage(),
        );
        if let Some(ExpireOutcome {
            rebroadcast: Some(p),
            ..
        }) = outcome
        {
            out.push(Action::Transmit(p));
        }
    }

    fn has_seen(state: &UniformNodeState, packet: PacketId) -> bool {
        state.seen.contains(&packet)
    }

    fn stored(state: &UniformNodeState) -> &BTreeSet<SegmentKey> {
        &state.stored
    }
}
