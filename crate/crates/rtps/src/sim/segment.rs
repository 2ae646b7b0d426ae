//! Simulated packets.

use crate::sim::time::SimTime;
use crate::FlowId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Data,
    Ack,
    Udp,
}

/// One packet on the wire. Timestamp fields implement the echo scheme both
/// endpoints use to measure round trips: `ts_value` is stamped by the
/// origin, `ts_echo` reflects the newest timestamp seen from the peer.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub kind: SegmentKind,
    pub flow: FlowId,
    /// Data: sequence number (1-based). Ack: cumulative highest in-order
    /// sequence received.
    pub seq: u64,
    pub size_bits: u64,
    pub ts_value: SimTime,
    pub ts_echo: SimTime,
    /// Stamped when this copy is handed to the first link.
    pub send_time: SimTime,
    /// First transmission of this sequence number; retransmissions keep
    /// the original, so delivery latency covers recovery time.
    pub first_send_time: SimTime,
    /// Advertised window carried on acknowledgments.
    pub awnd: u32,
    pub retransmit: bool,
    /// Index of the next link on the segment's route.
    pub route_pos: u16,
}

impl Segment {
    pub fn is_data(&self) -> bool {
        self.kind == SegmentKind::Data
    }
}
