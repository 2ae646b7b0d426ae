//! Simplified standards-style TCP endpoints: a sender with slow start,
//! congestion avoidance, fast retransmit/recovery and RTO backoff, and the
//! baseline delayed-ACK receivers the experiments compare against.

use std::collections::BTreeMap;

use crate::receiver::{AckSegment, FlowSequencer, SeqOutcome};
use crate::sim::segment::{Segment, SegmentKind};
use crate::sim::time::SimTime;
use crate::FlowId;

/// Minimum retransmission timeout, seconds.
pub const MIN_RTO: f64 = 0.2;
/// Timer granularity term in the timeout: the variance contribution never
/// drops below this, so a receiver holding an acknowledgment for up to
/// `MAX_ACK_DELAY` cannot race a converged timer.
pub const RTO_GRANULARITY: f64 = 0.2;
/// Retransmission timeout cap, seconds.
pub const MAX_RTO: f64 = 60.0;
/// Timeout before samples exist, seconds.
pub const INITIAL_RTO: f64 = 1.0;
/// Fallback delayed-ACK timer of the baseline receivers, seconds.
pub const BASELINE_DELACK_TIMEOUT: f64 = 0.2;
/// Window the baseline receivers advertise, packets.
pub const BASELINE_ADVERTISED_WINDOW: u32 = 50;
/// Per-packet delay-window growth of the adaptive baseline.
pub const DAAP_GROWTH: f64 = 0.25;
/// Delay-window cap of the adaptive baseline.
pub const DAAP_CAP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenderPhase {
    SlowStart,
    CongestionAvoidance,
    FastRecovery,
}

#[derive(Debug, Clone, Copy)]
pub struct SenderConfig {
    pub packet_bits: u64,
    pub ack_bits: u64,
    /// Advertised window assumed before the first ACK arrives.
    pub initial_awnd: u32,
    pub initial_cwnd: f64,
}

/// Long-lived TCP sender; always has data to transmit.
#[derive(Debug, Clone)]
pub struct SenderState {
    flow: FlowId,
    cfg: SenderConfig,
    pub cwnd: f64,
    pub ssthresh: f64,
    pub phase: SenderPhase,
    next_seq: u64,
    highest_acked: u64,
    /// Outstanding sequence numbers and their first transmission times.
    inflight: BTreeMap<u64, SimTime>,
    dup_acks: u32,
    awnd: u32,
    srtt: Option<f64>,
    rttvar: f64,
    rto: f64,
    rto_deadline: Option<SimTime>,
    /// Newest receiver timestamp, echoed on outgoing data.
    peer_stamp: SimTime,
    /// Recovery ends once this sequence is cumulatively acknowledged.
    recover: u64,
    pub data_sent: u64,
    pub retx_sent: u64,
    pub acks_received: u64,
    pub rto_count: u64,
}

impl SenderState {
    pub fn new(flow: FlowId, cfg: SenderConfig) -> Self {
        Self {
            flow,
            cfg,
            cwnd: cfg.initial_cwnd,
            ssthresh: f64::INFINITY,
            phase: SenderPhase::SlowStart,
            next_seq: 1,
            highest_acked: 0,
            inflight: BTreeMap::new(),
            dup_acks: 0,
            awnd: cfg.initial_awnd,
            srtt: None,
            rttvar: 0.0,
            rto: INITIAL_RTO,
            rto_deadline: None,
            peer_stamp: SimTime::ZERO,
            recover: 0,
            data_sent: 0,
            retx_sent: 0,
            acks_received: 0,
            rto_count: 0,
        }
    }

    pub fn advertised_window(&self) -> u32 {
        self.awnd
    }

    pub fn outstanding(&self) -> usize {
        self.inflight.len()
    }

    pub fn highest_acked(&self) -> u64 {
        self.highest_acked
    }

    pub fn rto_deadline(&self) -> Option<SimTime> {
        self.rto_deadline
    }

    pub fn rto_interval(&self) -> f64 {
        self.rto
    }

    fn window(&self) -> u64 {
        let cwnd = self.cwnd.floor().max(1.0) as u64;
        cwnd.min(u64::from(self.awnd.max(1)))
    }

    fn data_segment(&self, seq: u64, first_sent: SimTime, now: SimTime, retransmit: bool) -> Segment {
        Segment {
            kind: SegmentKind::Data,
            flow: self.flow,
            seq,
            size_bits: self.cfg.packet_bits,
            ts_value: now,
            ts_echo: self.peer_stamp,
            send_time: now,
            first_send_time: first_sent,
            awnd: 0,
            retransmit,
            route_pos: 0,
        }
    }

    /// Transmits as much new data as the window permits.
    pub fn fill_window(&mut self, now: SimTime) -> Vec<Segment> {
        let mut out = Vec::new();
        while (self.inflight.len() as u64) < self.window() {
            let seq = self.next_seq;
            self.next_seq += 1;
            self.inflight.insert(seq, now);
            self.data_sent += 1;
            out.push(self.data_segment(seq, now, now, false));
        }
        if !out.is_empty() && self.rto_deadline.is_none() {
            self.rto_deadline = Some(now + SimTime::from_secs_f64(self.rto));
        }
        out
    }

    fn retransmit(&mut self, seq: u64, now: SimTime) -> Segment {
        let first = self.inflight.get(&seq).copied().unwrap_or(now);
        self.data_sent += 1;
        self.retx_sent += 1;
        self.data_segment(seq, first, now, true)
    }

    fn update_rtt(&mut self, sample: f64) {
        match self.srtt {
            Some(srtt) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (srtt - sample).abs();
                self.srtt = Some(0.875 * srtt + 0.125 * sample);
            }
            None => {
                self.srtt = Some(sample);
                self.rttvar = sample / 2.0;
            }
        }
        self.rto = (self.srtt.unwrap() + (4.0 * self.rttvar).max(RTO_GRANULARITY))
            .clamp(MIN_RTO, MAX_RTO);
    }

    /// Handles one (possibly duplicate) cumulative acknowledgment and
    /// returns the segments it releases.
    pub fn on_ack(&mut self, ack: &AckSegment, now: SimTime) -> Vec<Segment> {
        self.acks_received += 1;
        self.awnd = ack.awnd.max(1);
        self.peer_stamp = ack.ts_value;
        if ack.ts_echo > SimTime::ZERO {
            let sample = (now.saturating_sub(ack.ts_echo)).as_secs_f64();
            if sample > 0.0 {
                self.update_rtt(sample);
            }
        }

        if ack.ack > self.highest_acked {
            self.highest_acked = ack.ack;
            let acked: Vec<u64> = self
                .inflight
                .range(..=ack.ack)
                .map(|(&seq, _)| seq)
                .collect();
            for seq in acked {
                self.inflight.remove(&seq);
            }
            self.dup_acks = 0;

            let mut out = Vec::new();
            match self.phase {
                SenderPhase::FastRecovery => {
                    if ack.ack >= self.recover {
                        self.cwnd = self.ssthresh;
                        self.phase = SenderPhase::CongestionAvoidance;
                    } else {
                        // Partial ack: another hole in the recovery window.
                        out.push(self.retransmit(ack.ack + 1, now));
                    }
                }
                SenderPhase::SlowStart => {
                    self.cwnd += 1.0;
                    if self.cwnd >= self.ssthresh {
                        self.phase = SenderPhase::CongestionAvoidance;
                    }
                }
                SenderPhase::CongestionAvoidance => {
                    self.cwnd += 1.0 / self.cwnd;
                }
            }

            self.rto_deadline = if self.inflight.is_empty() {
                None
            } else {
                Some(now + SimTime::from_secs_f64(self.rto))
            };
            out.extend(self.fill_window(now));
            out
        } else if ack.ack == self.highest_acked {
            self.dup_acks += 1;
            if self.phase == SenderPhase::FastRecovery {
                self.cwnd += 1.0;
                self.fill_window(now)
            } else if self.dup_acks == 3 {
                self.ssthresh = (self.cwnd / 2.0).max(2.0);
                self.cwnd = self.ssthresh + 3.0;
                self.recover = self.next_seq - 1;
                self.phase = SenderPhase::FastRecovery;
                let lost = self.highest_acked + 1;
                if self.inflight.contains_key(&lost) {
                    vec![self.retransmit(lost, now)]
                } else {
                    Vec::new()
                }
            } else {
                Vec::new()
            }
        } else {
            // Below the cumulative point: stale, ignored.
            Vec::new()
        }
    }

    /// Retransmission timeout: collapse to slow start, retransmit the
    /// oldest outstanding segment, and back the timer off exponentially.
    pub fn on_rto(&mut self, deadline: SimTime, now: SimTime) -> Option<Segment> {
        if self.rto_deadline != Some(deadline) {
            return None;
        }
        let oldest = match self.inflight.keys().next() {
            Some(&seq) => seq,
            None => {
                self.rto_deadline = None;
                return None;
            }
        };
        self.rto_count += 1;
        self.ssthresh = (self.cwnd / 2.0).max(2.0);
        self.cwnd = 1.0;
        self.phase = SenderPhase::SlowStart;
        self.dup_acks = 0;
        self.rto = (self.rto * 2.0).min(MAX_RTO);
        self.rto_deadline = Some(now + SimTime::from_secs_f64(self.rto));
        Some(self.retransmit(oldest, now))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineVariant {
    /// Standard delayed ACK, one per two packets.
    DelAck2,
    /// Fixed delay window of three.
    Dca3,
    /// Adaptive delay window capped at four, reset on loss.
    Daap4,
}

impl BaselineVariant {
    fn initial_da(self) -> f64 {
        match self {
            BaselineVariant::DelAck2 => 2.0,
            BaselineVariant::Dca3 => 3.0,
            BaselineVariant::Daap4 => 1.0,
        }
    }
}

/// One baseline receiver per flow: delayed cumulative ACKs with a fixed or
/// adaptive window, an immediate duplicate ACK on out-of-order data, and a
/// 200 ms fallback timer.
#[derive(Debug, Clone)]
pub struct BaselineReceiver {
    flow: FlowId,
    variant: BaselineVariant,
    seq: FlowSequencer,
    da: f64,
    ac: u32,
    deadline: Option<SimTime>,
    pending_since: Option<SimTime>,
    last_data_stamp: SimTime,
    pub delivered_unique: u64,
    pub dup_data: u64,
    pub acks_emitted: u64,
    pub max_wait: f64,
}

impl BaselineReceiver {
    pub fn new(flow: FlowId, variant: BaselineVariant) -> Self {
        Self {
            flow,
            variant,
            seq: FlowSequencer::new(),
            da: variant.initial_da(),
            ac: 0,
            deadline: None,
            pending_since: None,
            last_data_stamp: SimTime::ZERO,
            delivered_unique: 0,
            dup_data: 0,
            acks_emitted: 0,
            max_wait: 0.0,
        }
    }

    pub fn delay_window(&self) -> f64 {
        self.da
    }

    pub fn timer_deadline(&self) -> Option<SimTime> {
        self.deadline
    }

    pub fn cum_ack(&self) -> u64 {
        self.seq.cum_ack()
    }

    pub fn is_duplicate(&self, seq: u64) -> bool {
        self.seq.is_duplicate(seq)
    }

    fn make_ack(&mut self, now: SimTime, ts_echo: SimTime) -> AckSegment {
        if let Some(since) = self.pending_since.take() {
            self.max_wait = self.max_wait.max((now - since).as_secs_f64());
        }
        self.deadline = None;
        self.ac = 0;
        self.acks_emitted += 1;
        AckSegment {
            flow: self.flow,
            ack: self.seq.cum_ack(),
            awnd: BASELINE_ADVERTISED_WINDOW,
            ts_value: now,
            ts_echo,
            emitted: now,
        }
    }

    pub fn on_data(&mut self, seg: &Segment, now: SimTime) -> Option<AckSegment> {
        self.last_data_stamp = seg.ts_value;
        match self.seq.observe(seg.seq) {
            SeqOutcome::Duplicate => {
                self.dup_data += 1;
                Some(self.make_ack(now, seg.ts_value))
            }
            SeqOutcome::OutOfOrder => {
                self.delivered_unique += 1;
                if self.variant == BaselineVariant::Daap4 {
                    self.da = 1.0;
                }
                Some(self.make_ack(now, seg.ts_value))
            }
            SeqOutcome::InOrder { .. } => {
                self.delivered_unique += 1;
                self.ac += 1;
                let ack = if f64::from(self.ac) >= self.da {
                    Some(self.make_ack(now, seg.ts_value))
                } else {
                    if self.pending_since.is_none() {
                        self.pending_since = Some(now);
                        self.deadline =
                            Some(now + SimTime::from_secs_f64(BASELINE_DELACK_TIMEOUT));
                    }
                    None
                };
                if self.variant == BaselineVariant::Daap4 {
                    self.da = (self.da + DAAP_GROWTH).min(DAAP_CAP);
                }
                ack
            }
        }
    }

    pub fn on_timer(&mut self, deadline: SimTime, now: SimTime) -> Option<AckSegment> {
        if self.deadline != Some(deadline) || self.ac == 0 {
            return None;
        }
        Some(self.make_ack(now, self.last_data_stamp))
    }
}
