//! Per-node dissemination state machines.
//!
//! Both protocols are synchronous: the trial engine feeds them receptions and
//! timer expiries and they answer with [`Action`]s. Timers live in the
//! engine's event queue; randomness comes through [`DrawSource`].

pub mod deep;
pub mod uniform;

use std::collections::BTreeSet;

use crate::packet::{Packet, PacketId, SegmentKey};
use crate::sim::{SimTime, TrialStreams};
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolKind {
    Uniform,
    Deep,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Uniform => "uniform",
            ProtocolKind::Deep => "deep",
        }
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "uniform" => Ok(ProtocolKind::Uniform),
            "deep" => Ok(ProtocolKind::Deep),
            other => Err(format!("unknown protocol `{other}` (expected uniform or deep)")),
        }
    }
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Maximum number of segments a node may hold; `None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Capacity(pub Option<usize>);

impl Capacity {
    pub const UNLIMITED: Capacity = Capacity(None);

    pub fn has_room(self, stored: &BTreeSet<SegmentKey>) -> bool {
        self.0.is_none_or(|cap| stored.len() < cap)
    }
}

/// Source of the random numbers a protocol consumes.
pub trait DrawSource {
    /// Random assessment delay base draw in `[0, t_max)`.
    fn rad(&mut self, t_max_ms: f64) -> f64;
    /// Storage coin in `[0, 1)`.
    fn storage(&mut self) -> f64;
    /// Forwarding coin in `[0, 1)`.
    fn forwarding(&mut self) -> f64;
    /// Timing jitter in `[lo, hi)`.
    fn jitter(&mut self, lo_ms: f64, hi_ms: f64) -> f64;
}

impl DrawSource for TrialStreams {
    fn rad(&mut self, t_max_ms: f64) -> f64 {
        self.rad.uniform(0.0, t_max_ms)
    }

    fn storage(&mut self) -> f64 {
        self.storage.unit()
    }

    fn forwarding(&mut self) -> f64 {
        self.forwarding.unit()
    }

    fn jitter(&mut self, lo_ms: f64, hi_ms: f64) -> f64 {
        self.jitter.uniform(lo_ms, hi_ms)
    }
}

/// What the engine should do on a node's behalf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    /// Start sending now.
    Transmit(Packet),
    /// Start sending at the given time.
    TransmitAt(SimTime, Packet),
    ArmRad(SimTime, PacketId),
    ArmCorrective(SimTime, PacketId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timer {
    Rad(PacketId),
    Corrective(PacketId),
}

/// Engine-supplied context for one protocol callback.
pub struct NodeCtx<'a, D: DrawSource + ?Sized> {
    pub node: NodeId,
    pub now: SimTime,
    pub degree: usize,
    /// RAD stretch factor of this node (1 when the extension is off).
    pub k: f64,
    pub draws: &'a mut D,
}

/// Adapter between a protocol's node state machine and the trial engine.
pub trait Protocol {
    type State: Default + Clone + std::fmt::Debug;

    fn kind(&self) -> ProtocolKind;

    /// The master injects a fresh segment; returns the frame it broadcasts.
    fn originate(&self, node: NodeId, state: &mut Self::State, packet: Packet) -> Packet;

    fn on_receive<D: DrawSource + ?Sized>(
        &self,
        ctx: &mut NodeCtx<'_, D>,
        state: &mut Self::State,
        packet: &Packet,
        out: &mut Vec<Action>,
    );

    fn on_timer<D: DrawSource + ?Sized>(
        &self,
        ctx: &mut NodeCtx<'_, D>,
        state: &mut Self::State,
        timer: Timer,
        out: &mut Vec<Action>,
    );

    fn has_seen(state: &Self::State, packet: PacketId) -> bool;

    fn stored(state: &Self::State) -> &BTreeSet<SegmentKey>;
}
