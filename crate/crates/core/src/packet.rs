use std::fmt;

use crate::topology::NodeId;

/// Identifies one disseminated segment. Rebroadcasts keep the id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PacketId(pub u32);

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pkt{}", self.0)
    }
}

/// A `(data item, segment)` pair held in node memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentKey {
    pub data_item: u32,
    pub segment: u16,
}

/// Broadcast frame exchanged by both protocols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub id: PacketId,
    pub data_item: u32,
    pub segment: u16,
    pub importance: f64,
    /// Node-storage flag: set when the sender stored this segment.
    pub ns: bool,
    pub sender: NodeId,
    pub payload_bytes: u32,
}

impl Packet {
    pub fn key(&self) -> SegmentKey {
        SegmentKey {
            data_item: self.data_item,
            segment: self.segment,
        }
    }

    /// Copy of this packet as rebroadcast by `sender` with the given flag.
    pub fn relayed(&self, sender: NodeId, ns: bool) -> Packet {
        Packet { sender, ns, ..*self }
    }
}
