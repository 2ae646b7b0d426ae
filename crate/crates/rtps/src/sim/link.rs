//! Unidirectional links with drop-tail FIFO queues.
//!
//! A link owns one queue (one upstream node's buffer). Several links can
//! feed one shared medium, which serializes at most one transmission at a
//! time across all of them; the engine arbitrates by earliest enqueue.
//! The head-of-queue packet in service counts toward the occupancy, so a
//! link of capacity 50 holds at most 50 packets total.

use std::collections::VecDeque;

use crate::sim::segment::Segment;
use crate::sim::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Debug)]
pub struct Link {
    pub bandwidth_bps: f64,
    pub propagation: SimTime,
    pub capacity: usize,
    /// Shared medium this link transmits on; doubles as the collision
    /// bookkeeping id.
    pub medium: usize,
    queue: VecDeque<(Segment, SimTime)>,
    serving: bool,
    pub offered: u64,
    pub queue_drops: u64,
    pub loss_drops: u64,
    pub delivered: u64,
}

impl Link {
    pub fn new(bandwidth_bps: f64, propagation: SimTime, capacity: usize, medium: usize) -> Self {
        Self {
            bandwidth_bps,
            propagation,
            capacity,
            medium,
            queue: VecDeque::new(),
            serving: false,
            offered: 0,
            queue_drops: 0,
            loss_drops: 0,
            delivered: 0,
        }
    }

    pub fn occupancy(&self) -> usize {
        self.queue.len()
    }

    pub fn is_serving(&self) -> bool {
        self.serving
    }

    /// Accepts the segment unless the queue is full.
    pub fn enqueue(&mut self, seg: Segment, now: SimTime) -> bool {
        self.offered += 1;
        if self.queue.len() < self.capacity {
            self.queue.push_back((seg, now));
            true
        } else {
            self.queue_drops += 1;
            false
        }
    }

    /// Enqueue time of the waiting head, if any and not already in service.
    pub fn head_wait(&self) -> Option<SimTime> {
        if self.serving {
            None
        } else {
            self.queue.front().map(|&(_, at)| at)
        }
    }

    /// Marks the head packet as in service and returns its serialization
    /// time.
    pub fn begin_service(&mut self) -> SimTime {
        debug_assert!(!self.serving && !self.queue.is_empty());
        self.serving = true;
        let bits = self.queue[0].0.size_bits as f64;
        SimTime::from_nanos((bits * 1e9 / self.bandwidth_bps).round() as u64)
    }

    /// Completes service of the head packet.
    pub fn finish_service(&mut self) -> Segment {
        debug_assert!(self.serving);
        self.serving = false;
        self.queue.pop_front().expect("service on empty queue").0
    }

    /// Conservation identity: everything offered was delivered, dropped, or
    /// is still queued.
    pub fn conserves(&self) -> bool {
        self.offered
            == self.delivered + self.queue_drops + self.loss_drops + self.queue.len() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::segment::SegmentKind;
    use crate::FlowId;

    fn seg(seq: u64) -> Segment {
        Segment {
            kind: SegmentKind::Data,
            flow: FlowId(0),
            seq,
            size_bits: 11_680,
            ts_value: SimTime::ZERO,
            ts_echo: SimTime::ZERO,
            send_time: SimTime::ZERO,
            first_send_time: SimTime::ZERO,
            awnd: 0,
            retransmit: false,
            route_pos: 0,
        }
    }

    fn link(capacity: usize) -> Link {
        Link::new(1e6, SimTime::from_millis(1), capacity, 0)
    }

    #[test]
    fn accepts_until_full() {
        let mut l = link(50);
        for i in 0..49 {
            assert!(l.enqueue(seg(i), SimTime::ZERO));
        }
        // Occupancy 49/50: still accepted.
        assert!(l.enqueue(seg(49), SimTime::ZERO));
        // Occupancy 50/50: dropped.
        assert!(!l.enqueue(seg(50), SimTime::ZERO));
        assert_eq!(l.queue_drops, 1);
    }

    #[test]
    fn burst_of_sixty_drops_exactly_ten() {
        let mut l = link(50);
        let accepted = (0..60)
            .filter(|&i| l.enqueue(seg(i), SimTime::ZERO))
            .count();
        assert_eq!(accepted, 50);
        assert_eq!(l.queue_drops, 10);
        assert!(l.conserves());
    }

    #[test]
    fn serialization_time_from_bandwidth() {
        let mut l = link(50);
        l.enqueue(seg(0), SimTime::ZERO);
        // 11,680 bits over 1 Mbps = 11.68 ms.
        assert_eq!(l.begin_service(), SimTime::from_micros(11_680));
    }

    #[test]
    fn fifo_order_preserved() {
        let mut l = link(50);
        l.enqueue(seg(1), SimTime::ZERO);
        l.enqueue(seg(2), SimTime::from_millis(1));
        l.begin_service();
        assert_eq!(l.finish_service().seq, 1);
        l.begin_service();
        assert_eq!(l.finish_service().seq, 2);
    }

    #[test]
    fn head_wait_hidden_while_serving() {
        let mut l = link(50);
        l.enqueue(seg(1), SimTime::from_millis(3));
        assert_eq!(l.head_wait(), Some(SimTime::from_millis(3)));
        l.begin_service();
        assert_eq!(l.head_wait(), None);
    }
}
