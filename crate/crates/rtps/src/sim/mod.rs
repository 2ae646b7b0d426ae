//! Deterministic discrete-event network core: event queue, linear
//! multi-hop chains with drop-tail FIFO links, a parameterized loss and
//! collision model, and constant-bit-rate cross traffic.

pub mod engine;
pub mod link;
pub mod loss;
pub mod segment;
pub mod time;

pub use engine::{CrossTraffic, FlowSpec, RunOutcome, Sim, SimError, SimSetup, Topology, Variant};
pub use link::Link;
pub use loss::LossModel;
pub use segment::{Segment, SegmentKind};
pub use time::SimTime;
