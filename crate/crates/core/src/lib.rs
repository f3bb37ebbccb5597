//! Deterministic discrete-event simulation of data dissemination and uniform
//! replication in a dense wireless sensor network embedded in a material.
//!
//! Two protocols are modelled on the same radio and energy layer:
//!
//! - [`protocol::uniform`]: energy-aware counter-based flooding with the
//!   NS (node-storage) header that limits storage to about one copy per
//!   neighborhood.
//! - [`protocol::deep`]: the DEEP baseline (RAPID probabilistic forwarding
//!   with corrective rebroadcasts and independent storage draws).
//!
//! [`sweep::run_sweep`] drives batches of seeded trials and
//! [`metrics`] turns each trial into uniformity, energy and reachability
//! figures.

pub mod config;
pub mod energy;
pub mod metrics;
pub mod packet;
pub mod protocol;
pub mod sim;
pub mod sweep;
pub mod topology;
pub mod trial;

pub use config::{ConfigError, ScenarioConfig};
pub use metrics::{MetricsReport, SegmentSet, StorageSnapshot, TrialMetrics};
pub use packet::{Packet, PacketId, SegmentKey};
pub use protocol::ProtocolKind;
pub use sim::{SimTime, Simulation};
pub use sweep::{run_scenario_trial, run_sweep, SweepSpec};
pub use topology::{NodeId, Position, Topology};
pub use trial::{run_trial, TrialParams, TrialResult};
