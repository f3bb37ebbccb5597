//! Discrete-event engine: virtual clock, ordered event queue and named
//! random streams.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::packet::{Packet, PacketId};
use crate::topology::{NodeId, TxId};

/// Simulated time in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics on negative or non-finite values.
    pub fn from_ms(ms: f64) -> Self {
        assert!(ms.is_finite() && ms >= 0.0, "invalid simulation time {ms}");
        SimTime(ms)
    }

    pub fn ms(self) -> f64 {
        self.0
    }

    pub fn secs(self) -> f64 {
        self.0 / 1000.0
    }

    pub fn after(self, delay_ms: f64) -> Self {
        SimTime::from_ms(self.0 + delay_ms)
    }
}

impl Eq for SimTime {}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// A scheduled transmission start (jittered forwarding, deferred sends).
    TxStart(Packet),
    TxEnd(TxId),
    RxDeliver(TxId),
    RadExpire(PacketId),
    CorrectiveExpire(PacketId),
    DisseminateSegment(Packet),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub fire_at: SimTime,
    pub seq: u64,
    pub node: NodeId,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    // Reversed so that `BinaryHeap` pops the earliest (fire_at, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_at
            .cmp(&self.fire_at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("event scheduled at {fire_at} but clock is already at {now}")]
pub struct ScheduleInPast {
    pub fire_at: SimTime,
    pub now: SimTime,
}

/// Clock plus pending-event queue for one trial.
#[derive(Debug, Default)]
pub struct Simulation {
    clock: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Event>,
    processed: u64,
}

impl Simulation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn try_schedule(
        &mut self,
        fire_at: SimTime,
        node: NodeId,
        kind: EventKind,
    ) -> Result<u64, ScheduleInPast> {
        if fire_at < self.clock {
            return Err(ScheduleInPast {
                fire_at,
                now: self.clock,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event {
            fire_at,
            seq,
            node,
            kind,
        });
        Ok(seq)
    }

    /// Enqueues an event. Scheduling before the current clock is a contract
    /// violation and panics.
    pub fn schedule(&mut self, fire_at: SimTime, node: NodeId, kind: EventKind) -> u64 {
        match self.try_schedule(fire_at, node, kind) {
            Ok(seq) => seq,
            Err(e) => panic!("{e}"),
        }
    }

    pub fn schedule_in(&mut self, delay_ms: f64, node: NodeId, kind: EventKind) -> u64 {
        let at = self.clock.after(delay_ms);
        self.schedule(at, node, kind)
    }

    /// Pops and handles events in `(fire_at, seq)` order until the queue is
    /// empty or the next event lies beyond `t_end`. The handler may schedule
    /// further events. On return the clock reads `t_end` unless it was
    /// already past it.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F)
    where
        F: FnMut(&mut Simulation, Event),
    {
        while let Some(next) = self.queue.peek() {
            if next.fire_at > t_end {
                break;
            }
            let event = self.queue.pop().expect("peeked");
            debug_assert!(event.fire_at >= self.clock);
            self.clock = event.fire_at;
            self.processed += 1;
            handler(self, event);
        }
        if self.clock < t_end {
            self.clock = t_end;
        }
    }
}

/// Purpose label of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StreamId {
    Placement,
    Rad,
    StorageDraw,
    Forwarding,
    Jitter,
    InitialEnergy,
}

impl StreamId {
    fn index(self) -> u64 {
        match self {
            StreamId::Placement => 1,
            StreamId::Rad => 2,
            StreamId::StorageDraw => 3,
            StreamId::Forwarding => 4,
            StreamId::Jitter => 5,
            StreamId::InitialEnergy => 6,
        }
    }
}

/// A reproducible random sequence identified by `(seed, stream)`.
///
/// Each stream id selects a distinct ChaCha stream under the same key, so
/// adding draws to one purpose never shifts another purpose's sequence.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream: StreamId,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream.index());
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> StreamId {
        self.stream
    }

    /// Draws from `[lo, hi)`; `lo == hi` yields `lo`. Panics if `lo > hi`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        assert!(lo <= hi, "uniform: lo ({lo}) > hi ({hi})");
        let u: f64 = self.rng.gen();
        let v = lo + (hi - lo) * u;
        // rounding can land exactly on hi for tiny intervals
        if v >= hi && hi > lo {
            lo
        } else {
            v
        }
    }

    /// Draws from `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.gen()
    }
}

/// The full set of per-purpose streams for one trial seed.
#[derive(Debug, Clone)]
pub struct TrialStreams {
    pub placement: RandomStream,
    pub rad: RandomStream,
    pub storage: RandomStream,
    pub forwarding: RandomStream,
    pub jitter: RandomStream,
    pub initial_energy: RandomStream,
}

impl TrialStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            placement: RandomStream::new(seed, StreamId::Placement),
            rad: RandomStream::new(seed, StreamId::Rad),
            storage: RandomStream::new(seed, StreamId::StorageDraw),
            forwarding: RandomStream::new(seed, StreamId::Forwarding),
            jitter: RandomStream::new(seed, StreamId::Jitter),
            initial_energy: RandomStream::new(seed, StreamId::InitialEnergy),
        }
    }
}
