//! The RTPS receiver: per-arrival orchestration of rate estimation, link
//! capacity tracking, desired-rate allocation, advertised-window control and
//! the delayed-acknowledgment decision.
//!
//! One receiver instance owns every flow terminating at it, since the
//! consumable link and the capacity belief are receiver-global.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::drcm::{self, DrcmError};
use crate::lccm::{LccmParams, LinkCapacityState};
use crate::pfaocm::{self, AckDecision, PfaocmParams, WindowState};
use crate::rate::{RateError, RateEstimate};
use crate::sim::segment::Segment;
use crate::sim::time::SimTime;
use crate::social::PopularityProfile;
use crate::FlowId;

/// Upper bound on how long an acknowledgment may be held, strictly inside
/// the sender's minimum retransmission timeout so a delayed ACK can never
/// push a loss-free sender into an RTO.
pub const MAX_ACK_DELAY: f64 = 0.18;

#[derive(Debug, Error)]
pub enum ReceiverError {
    #[error("unknown flow {0}")]
    UnknownFlow(FlowId),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Drcm(#[from] DrcmError),
}

/// Acknowledgment produced by a receiver.
#[derive(Debug, Clone, Copy)]
pub struct AckSegment {
    pub flow: FlowId,
    /// Cumulative highest in-order sequence received.
    pub ack: u64,
    /// Advertised window, packets; at least 1.
    pub awnd: u32,
    /// Receiver timestamp for the peer to echo back.
    pub ts_value: SimTime,
    /// Echo of the newest data timestamp.
    pub ts_echo: SimTime,
    pub emitted: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqOutcome {
    /// Already delivered or already buffered.
    Duplicate,
    /// The expected sequence; the reorder buffer may have drained behind it.
    InOrder { advanced: u64 },
    /// Creates or extends a gap.
    OutOfOrder,
}

/// Cumulative-ACK sequencing: next expected sequence plus the reorder
/// buffer. The buffer never holds the next expected sequence.
#[derive(Debug, Clone, Default)]
pub struct FlowSequencer {
    next_expected: u64,
    buffer: BTreeSet<u64>,
}

impl FlowSequencer {
    pub fn new() -> Self {
        Self {
            next_expected: 1,
            buffer: BTreeSet::new(),
        }
    }

    /// Highest in-order sequence received so far; 0 before any data.
    pub fn cum_ack(&self) -> u64 {
        self.next_expected - 1
    }

    pub fn is_duplicate(&self, seq: u64) -> bool {
        seq < self.next_expected || self.buffer.contains(&seq)
    }

    /// True iff `seq` would create or extend a gap: not the next expected
    /// sequence, not delivered, not already buffered.
    pub fn is_out_of_order(&self, seq: u64) -> bool {
        seq > self.next_expected && !self.buffer.contains(&seq)
    }

    pub fn observe(&mut self, seq: u64) -> SeqOutcome {
        if self.is_duplicate(seq) {
            return SeqOutcome::Duplicate;
        }
        if seq == self.next_expected {
            self.next_expected += 1;
            let mut advanced = 1;
            while self.buffer.remove(&self.next_expected) {
                self.next_expected += 1;
                advanced += 1;
            }
            SeqOutcome::InOrder { advanced }
        } else {
            self.buffer.insert(seq);
            SeqOutcome::OutOfOrder
        }
    }
}

/// Per-flow static configuration handed to the receiver at setup.
#[derive(Debug, Clone, Copy)]
pub struct FlowSetup {
    /// Least rate guaranteed to the flow, bits/second.
    pub least_rate: f64,
    /// Time the flow starts sending; anchors the first inter-arrival gap.
    pub start: f64,
    /// Seeds the receiver SRTT until the first timestamp echo.
    pub base_rtt: f64,
}

#[derive(Debug, Clone)]
pub struct RtpsConfig {
    pub pfaocm: PfaocmParams,
    pub lccm: LccmParams,
    pub packet_bits: f64,
    /// Recompute the allocation on every arrival instead of per epoch.
    /// Conformance aid; the epoch mode is the operational default.
    pub per_arrival_drcm: bool,
}

/// Everything the receiver tracks for one flow.
#[derive(Debug, Clone)]
pub struct RtpsFlowState {
    pub seq: FlowSequencer,
    pub est: RateEstimate,
    pub ws: WindowState,
    least_rate: f64,
    /// Published desired rate: drives the window engine.
    pub desired: f64,
    /// Uncapped entitlement: drives contention detection.
    pub entitled: f64,
    timer_deadline: Option<SimTime>,
    pending_since: Option<SimTime>,
    armed_timeout: f64,
    last_awnd_adjust: Option<SimTime>,
    last_echo_used: SimTime,
    last_data_stamp: SimTime,
    /// Latest effective timeout `t_k`, seconds.
    pub timeout: f64,
    pub delivered_unique: u64,
    pub dup_data: u64,
    pub acks_emitted: u64,
}

impl RtpsFlowState {
    fn new(setup: &FlowSetup) -> Self {
        Self {
            seq: FlowSequencer::new(),
            est: RateEstimate::new(setup.start, setup.base_rtt),
            ws: WindowState::new(),
            least_rate: setup.least_rate,
            desired: 0.0,
            entitled: 0.0,
            timer_deadline: None,
            pending_since: None,
            armed_timeout: 0.0,
            last_awnd_adjust: None,
            last_echo_used: SimTime::ZERO,
            last_data_stamp: SimTime::ZERO,
            timeout: 0.0,
            delivered_unique: 0,
            dup_data: 0,
            acks_emitted: 0,
        }
    }

    pub fn timer_deadline(&self) -> Option<SimTime> {
        self.timer_deadline
    }
}

#[derive(Debug, Clone)]
pub struct RtpsReceiver {
    cfg: RtpsConfig,
    profile: PopularityProfile,
    pub lccm: LinkCapacityState,
    flows: Vec<RtpsFlowState>,
    /// Largest observed ratio of in-order ACK wait to the timeout armed for
    /// it; at most 1 when the timer discipline holds.
    pub max_wait_ratio: f64,
}

impl RtpsReceiver {
    pub fn new(
        cfg: RtpsConfig,
        profile: PopularityProfile,
        setups: &[FlowSetup],
    ) -> Result<Self, ReceiverError> {
        assert_eq!(profile.flow_count(), setups.len());
        let lccm = LinkCapacityState::new(cfg.lccm, setups.len());
        let flows = setups.iter().map(RtpsFlowState::new).collect();
        let mut rx = Self {
            cfg,
            profile,
            lccm,
            flows,
            max_wait_ratio: 0.0,
        };
        rx.refresh_allocations()?;
        Ok(rx)
    }

    pub fn flow(&self, flow: FlowId) -> &RtpsFlowState {
        &self.flows[flow.index()]
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    pub fn profile(&self) -> &PopularityProfile {
        &self.profile
    }

    fn rates(&self) -> Vec<f64> {
        self.flows.iter().map(|f| f.est.rate()).collect()
    }

    /// Recomputes entitlements and published desired rates from the current
    /// capacity state. The additive-recovery bonus goes to the most popular
    /// flow alone; contended flows are capped at their measured rates and
    /// the freed share spreads over the others.
    fn refresh_allocations(&mut self) -> Result<(), ReceiverError> {
        let least: Vec<f64> = self.flows.iter().map(|f| f.least_rate).collect();
        let bonus = self.lccm.recovery_bonus();
        let top = self.profile.top();

        let uncapped = self.lccm.uncapped_capacity();
        let base = if bonus > 0.0 && uncapped - bonus > 0.0 {
            uncapped - bonus
        } else {
            uncapped
        };
        let applied_bonus = uncapped - base;
        let ent_alloc = drcm::compute_desired_rates(base, &least, &self.profile)?;
        let mut entitlements = ent_alloc.desired_rates().to_vec();
        entitlements[top.index()] += applied_bonus;

        let effective = self.lccm.effective_capacity(&entitlements);
        let pub_base = if applied_bonus > 0.0 && effective - applied_bonus > 0.0 {
            effective - applied_bonus
        } else {
            effective
        };
        let pub_bonus = effective - pub_base;
        let pub_alloc = drcm::compute_desired_rates(pub_base, &least, &self.profile)?;
        let rates = self.rates();
        let caps = self.lccm.contention_caps(&rates);
        let mut published = if caps.is_empty() {
            pub_alloc
        } else {
            drcm::apply_caps(&pub_alloc, &caps)
        };
        if pub_bonus > 0.0 {
            published.add_desired(top, pub_bonus);
        }

        for (i, flow) in self.flows.iter_mut().enumerate() {
            flow.entitled = entitlements[i];
            flow.desired = published.desired_rates()[i];
        }
        Ok(())
    }

    fn make_ack(&mut self, flow: FlowId, ts_echo: SimTime, now: SimTime) -> AckSegment {
        let fs = &mut self.flows[flow.index()];
        if let Some(since) = fs.pending_since.take() {
            let wait = (now - since).as_secs_f64();
            let ratio = if fs.armed_timeout > 0.0 {
                wait / fs.armed_timeout
            } else if wait > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            if ratio > self.max_wait_ratio {
                self.max_wait_ratio = ratio;
            }
        }
        fs.timer_deadline = None;
        fs.acks_emitted += 1;
        AckSegment {
            flow,
            ack: fs.seq.cum_ack(),
            awnd: fs.ws.awnd,
            ts_value: now,
            ts_echo,
            emitted: now,
        }
    }

    /// Processes one data packet and returns the acknowledgment it releases,
    /// if any. Duplicates are acknowledged immediately and touch none of the
    /// estimator or window state.
    pub fn on_data_packet(
        &mut self,
        seg: &Segment,
        now: SimTime,
    ) -> Result<Option<AckSegment>, ReceiverError> {
        let idx = seg.flow.index();
        if idx >= self.flows.len() {
            return Err(ReceiverError::UnknownFlow(seg.flow));
        }
        let now_s = now.as_secs_f64();

        if self.flows[idx].seq.is_duplicate(seg.seq) {
            self.flows[idx].dup_data += 1;
            // The cumulative ack covers everything in order, so nothing
            // stays unacknowledged; windows and estimator are untouched.
            self.flows[idx].ws.ac = 0;
            return Ok(Some(self.make_ack(seg.flow, seg.ts_value, now)));
        }

        let out_of_order = {
            let fs = &mut self.flows[idx];
            fs.last_data_stamp = seg.ts_value;

            if seg.ts_echo > SimTime::ZERO && seg.ts_echo != fs.last_echo_used {
                let sample = (now.saturating_sub(seg.ts_echo)).as_secs_f64();
                if sample > 0.0 {
                    fs.est.update_srtt(sample)?;
                    fs.last_echo_used = seg.ts_echo;
                }
            }

            let gap = now_s - fs.est.last_arrival();
            fs.est.update_rate(seg.size_bits as f64, now_s)?;
            fs.est.update_smoothed_arrival(gap)?;

            let outcome = fs.seq.observe(seg.seq);
            fs.delivered_unique += 1;
            matches!(outcome, SeqOutcome::OutOfOrder)
        };

        let rates = self.rates();
        self.lccm.update_consumable(&rates);
        if self.cfg.per_arrival_drcm {
            self.refresh_allocations()?;
        }

        let c = self.lccm.consumable();
        let me = self.lccm.max_estimation();
        let top_popular = self.profile.is_top(seg.flow);
        let params = self.cfg.pfaocm;
        let packet_bits = self.cfg.packet_bits;

        let fs = &mut self.flows[idx];
        fs.est.update_ewma(params.sigma)?;
        let w = fs.est.ewma();
        let srtt = fs.est.srtt();
        let desired = fs.desired;

        let adjust_due = fs
            .last_awnd_adjust
            .is_none_or(|t| (now.saturating_sub(t)).as_secs_f64() >= srtt);
        if adjust_due {
            pfaocm::adjust_advertised_window(&mut fs.ws, &params, w, desired, srtt, packet_bits);
            fs.last_awnd_adjust = Some(now);
        }

        let (e_ratio, factor) = pfaocm::compute_factor(&params, c, me);
        fs.ws.e_ratio = e_ratio;
        fs.ws.factor = factor;

        fs.timeout = pfaocm::effective_timeout(fs.est.smoothed_gap(), params.tolerance);

        let timer_expired = fs.timer_deadline.is_some_and(|d| now >= d);
        let decision = if timer_expired {
            pfaocm::lpda(&mut fs.ws, w)
        } else {
            pfaocm::ida(&mut fs.ws, &params, w, desired, out_of_order, top_popular)
        };

        self.lccm.commit_previous();

        match decision {
            AckDecision::AckNow => Ok(Some(self.make_ack(seg.flow, seg.ts_value, now))),
            AckDecision::Delay => {
                let fs = &mut self.flows[idx];
                if fs.pending_since.is_none() {
                    let deadline = now + SimTime::from_secs_f64(fs.timeout.min(MAX_ACK_DELAY));
                    fs.pending_since = Some(now);
                    fs.armed_timeout = (deadline - now).as_secs_f64();
                    fs.timer_deadline = Some(deadline);
                }
                Ok(None)
            }
        }
    }

    /// Delayed-ACK timer expiry. Releases the pending acknowledgment via the
    /// loss/popularity path; a spurious expiry with nothing pending is a
    /// no-op.
    pub fn on_timer_expiry(&mut self, flow: FlowId, deadline: SimTime, now: SimTime) -> Option<AckSegment> {
        let fs = &mut self.flows[flow.index()];
        if fs.timer_deadline != Some(deadline) || now < deadline {
            return None;
        }
        if fs.ws.ac == 0 {
            fs.timer_deadline = None;
            fs.pending_since = None;
            return None;
        }
        let w = fs.est.ewma();
        pfaocm::lpda(&mut fs.ws, w);
        let ts_echo = fs.last_data_stamp;
        Some(self.make_ack(flow, ts_echo, now))
    }

    /// Epoch-boundary maintenance: contention detection, capacity belief
    /// update, re-initialization, and the allocation refresh.
    pub fn on_epoch(&mut self, now: SimTime) -> Result<(), ReceiverError> {
        let rates = self.rates();
        let measured: Vec<bool> = self.flows.iter().map(|f| f.est.packets_seen() > 0).collect();
        let entitlements: Vec<f64> = self.flows.iter().map(|f| f.entitled).collect();
        let top_srtt = self.flows[self.profile.top().index()].est.srtt();
        self.lccm
            .epoch_update(now.as_secs_f64(), &rates, &measured, &entitlements, top_srtt);
        self.refresh_allocations()
    }
}
