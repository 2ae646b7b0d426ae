//! Receiver-side transport control for ad-hoc social networks.
//!
//! The library combines a protocol stack — per-flow rate estimation, link
//! capacity tracking, centrality-proportional rate allocation, and adaptive
//! advertised/delayed-ACK windows — with a deterministic discrete-event
//! network simulator and an experiment runner that sweeps topologies,
//! connection counts and loss rates and emits CSV metrics.

pub mod drcm;
pub mod endpoints;
pub mod experiment;
pub mod lccm;
pub mod pfaocm;
pub mod rate;
pub mod receiver;
pub mod scenario;
pub mod sim;
pub mod social;

pub use sim::time::SimTime;

/// Identifies one transport flow (one sender/receiver pair).
///
/// Ids are dense indices assigned in scenario declaration order; ordering
/// comparisons on `FlowId` are the deterministic tie-break everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u32);

impl FlowId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for FlowId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifies a node of the social community graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}
