//! The event loop: wires senders, links, cross traffic and one receiver
//! variant together and runs a scenario to its horizon.
//!
//! Topologies are linear chains. Every flow owns `hops` private links from
//! its sender through the intermediate nodes, then shares the final link
//! into the receiver. Reverse links mirror the forward ones and share their
//! hop, so acknowledgments and data meet on the same medium in the
//! collision model.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::endpoints::{
    BaselineReceiver, BaselineVariant, SenderConfig, SenderState, BASELINE_ADVERTISED_WINDOW,
    BASELINE_DELACK_TIMEOUT,
};
use crate::lccm::LccmParams;
use crate::pfaocm::PfaocmParams;
use crate::receiver::{AckSegment, FlowSetup, ReceiverError, RtpsConfig, RtpsReceiver};
use crate::sim::link::{Direction, Link};
use crate::sim::loss::LossModel;
use crate::sim::segment::{Segment, SegmentKind};
use crate::sim::time::SimTime;
use crate::social::PopularityProfile;
use crate::FlowId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid setup: {0}")]
    BadSetup(String),
    #[error(transparent)]
    Receiver(#[from] ReceiverError),
    #[error("event scheduled at {at} before current time {now}")]
    PastEvent { at: SimTime, now: SimTime },
}

/// Receiver protocol under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Rtps,
    DelAck2,
    Dca3,
    Daap4,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Rtps => "rtps",
            Variant::DelAck2 => "delack2",
            Variant::Dca3 => "dca3",
            Variant::Daap4 => "daap4",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "rtps" => Some(Variant::Rtps),
            "delack2" => Some(Variant::DelAck2),
            "dca3" => Some(Variant::Dca3),
            "daap4" => Some(Variant::Daap4),
            _ => None,
        }
    }

    pub const ALL: [Variant; 4] = [
        Variant::Rtps,
        Variant::DelAck2,
        Variant::Dca3,
        Variant::Daap4,
    ];
}

/// Linear chain parameters.
#[derive(Debug, Clone, Copy)]
pub struct Topology {
    /// Number of intermediate nodes between each sender and the receiver.
    pub hops: usize,
    /// Bandwidth of the private per-flow links, bits/second.
    pub hop_bandwidth_bps: f64,
    /// Bandwidth of the shared link into the receiver, bits/second.
    pub bottleneck_bps: f64,
    /// One-way propagation delay per link, seconds.
    pub hop_delay: f64,
    /// Drop-tail queue capacity per link, packets.
    pub queue_capacity: usize,
    /// Wireless-style shared medium: both directions of a hop share one
    /// serializer and one queue.
    pub half_duplex: bool,
}

impl Topology {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.hops < 1 {
            return Err(SimError::BadSetup("hop count must be at least 1".into()));
        }
        if self.hop_bandwidth_bps <= 0.0 || self.bottleneck_bps <= 0.0 {
            return Err(SimError::BadSetup("bandwidths must be positive".into()));
        }
        if self.queue_capacity < 1 {
            return Err(SimError::BadSetup("queue capacity must be at least 1".into()));
        }
        if self.hop_delay < 0.0 {
            return Err(SimError::BadSetup("hop delay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Interference cap applied to a flow's access link from a point in time.
#[derive(Debug, Clone, Copy)]
pub struct CapSpec {
    pub start: f64,
    pub rate_bps: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FlowSpec {
    pub least_rate_bps: f64,
    pub start: f64,
    /// Overrides the propagation-derived round-trip time of the private
    /// chain and seeds the receiver SRTT.
    pub base_rtt: Option<f64>,
    pub cap: Option<CapSpec>,
}

/// Constant-bit-rate UDP source sharing the bottleneck.
#[derive(Debug, Clone, Copy)]
pub struct CrossTraffic {
    pub rate_bps: f64,
    pub start: f64,
    pub stop: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub pfaocm: PfaocmParams,
    pub epsilon: f64,
    pub epoch: f64,
    pub reinit_period: f64,
    pub packet_bits: u64,
    pub ack_bits: u64,
    pub per_arrival_drcm: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            pfaocm: PfaocmParams::default(),
            epsilon: crate::lccm::DEFAULT_EPSILON,
            epoch: crate::lccm::DEFAULT_EPOCH,
            reinit_period: crate::lccm::DEFAULT_REINIT_PERIOD,
            packet_bits: 11_680,
            ack_bits: 320,
            per_arrival_drcm: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimSetup {
    pub variant: Variant,
    pub topology: Topology,
    pub flows: Vec<FlowSpec>,
    /// Degree centrality per flow, from the scenario's social graph.
    pub centralities: Vec<f64>,
    pub loss: LossModel,
    pub cross: Vec<CrossTraffic>,
    pub protocol: ProtocolConfig,
    pub duration: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
enum Event {
    FlowStart(FlowId),
    Departure { link: usize },
    Arrival { link: usize, seg: Segment },
    SenderRto { flow: FlowId, deadline: SimTime },
    DelayTimer { flow: FlowId, deadline: SimTime },
    Epoch,
    UdpEmit { source: usize, k: u64 },
    CapChange(FlowId),
}

struct Entry {
    at: SimTime,
    order: u64,
    event: Event,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.order == other.order
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // Reversed so the BinaryHeap pops the earliest entry; ties go to the
    // earliest-scheduled event.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.order).cmp(&(self.at, self.order))
    }
}

/// One shared transmission medium: its member links, whether a
/// transmission is in the air, and the per-stream presence bookkeeping the
/// collision model samples.
struct Medium {
    members: Vec<usize>,
    busy: bool,
    activity: HopActivity,
}

impl Medium {
    fn new(streams: usize) -> Self {
        Self {
            members: Vec::new(),
            busy: false,
            activity: HopActivity::new(streams),
        }
    }
}

/// Per-stream presence bookkeeping for one shared-medium hop. A stream is
/// one (flow, direction) pair; data and acknowledgments of the same flow
/// are distinct streams that can collide with each other.
struct HopActivity {
    occupancy: Vec<[u32; 2]>,
    last_active: Vec<[Option<SimTime>; 2]>,
}

impl HopActivity {
    fn new(streams: usize) -> Self {
        Self {
            occupancy: vec![[0, 0]; streams],
            last_active: vec![[None, None]; streams],
        }
    }

    fn dir_index(dir: Direction) -> usize {
        match dir {
            Direction::Forward => 0,
            Direction::Reverse => 1,
        }
    }

    fn add(&mut self, stream: usize, dir: Direction) {
        self.occupancy[stream][Self::dir_index(dir)] += 1;
    }

    fn remove(&mut self, stream: usize, dir: Direction, now: SimTime) {
        let d = Self::dir_index(dir);
        self.occupancy[stream][d] -= 1;
        self.last_active[stream][d] = Some(now);
    }

    /// Streams with a packet on the hop now or within the trailing window.
    fn active_streams(&self, now: SimTime, window: SimTime) -> u32 {
        let horizon = now.saturating_sub(window);
        let mut n = 0;
        for s in 0..self.occupancy.len() {
            for d in 0..2 {
                if self.occupancy[s][d] > 0
                    || self.last_active[s][d].is_some_and(|t| t >= horizon)
                {
                    n += 1;
                }
            }
        }
        n
    }
}

enum ReceiverKind {
    Rtps(Box<RtpsReceiver>),
    Baseline(Vec<BaselineReceiver>),
}

struct FlowRuntime {
    sender: SenderState,
    fwd: Vec<usize>,
    rev: Vec<usize>,
    spec: FlowSpec,
}

struct UdpRuntime {
    chain: Vec<usize>,
    spec: CrossTraffic,
    interval: f64,
    sent: u64,
    delivered: u64,
}

/// Per-flow counters harvested after a run.
#[derive(Debug, Clone, Default)]
pub struct FlowStats {
    pub data_sent: u64,
    pub retx_sent: u64,
    pub acks_received: u64,
    pub rto_count: u64,
    pub delivered_unique: u64,
    pub dup_data: u64,
    pub acks_emitted: u64,
    pub latencies: Vec<f64>,
}

/// One per-epoch time-series record.
#[derive(Debug, Clone)]
pub struct SeriesRow {
    pub t: f64,
    pub flow: u32,
    pub goodput_kbps: f64,
    pub awnd: u32,
    pub dawnd: f64,
    pub acks_cum: u64,
    pub retx_cum: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub duration: f64,
    pub packet_bits: u64,
    pub flows: Vec<FlowStats>,
    pub series: Vec<SeriesRow>,
    pub queue_drops: u64,
    pub loss_drops: u64,
    pub offered: u64,
    /// Largest (ACK wait / armed timeout) ratio seen at the receiver.
    pub max_wait_ratio: f64,
    pub udp_sent: u64,
    pub udp_delivered: u64,
    /// Number of events the run processed.
    pub events: u64,
}

pub struct Sim {
    now: SimTime,
    end: SimTime,
    queue: BinaryHeap<Entry>,
    next_order: u64,
    links: Vec<Link>,
    media: Vec<Medium>,
    flows: Vec<FlowRuntime>,
    udp: Vec<UdpRuntime>,
    receiver: ReceiverKind,
    loss: LossModel,
    rng: ChaCha8Rng,
    protocol: ProtocolConfig,
    epoch_len: SimTime,
    scheduled_delay: Vec<Option<SimTime>>,
    scheduled_rto: Vec<Option<SimTime>>,
    latencies: Vec<Vec<f64>>,
    delivered_prev: Vec<u64>,
    series: Vec<SeriesRow>,
}

impl Sim {
    pub fn new(setup: &SimSetup) -> Result<Self, SimError> {
        setup.topology.validate()?;
        let m = setup.flows.len();
        if m == 0 {
            return Err(SimError::BadSetup("at least one flow required".into()));
        }
        if setup.centralities.len() != m {
            return Err(SimError::BadSetup(
                "centralities must cover every flow".into(),
            ));
        }
        if setup.duration <= 0.0 {
            return Err(SimError::BadSetup("duration must be positive".into()));
        }
        setup
            .protocol
            .pfaocm
            .validate()
            .map_err(|e| SimError::BadSetup(e.to_string()))?;

        let topo = setup.topology;
        let streams = m + setup.cross.len();
        let mut links: Vec<Link> = Vec::new();
        let mut media: Vec<Medium> = Vec::new();
        let prop = SimTime::from_secs_f64(topo.hop_delay);

        let add_link = |links: &mut Vec<Link>,
                            media: &mut Vec<Medium>,
                            bw: f64,
                            delay: SimTime,
                            cap: usize,
                            medium: usize|
         -> usize {
            let idx = links.len();
            links.push(Link::new(bw, delay, cap, medium));
            media[medium].members.push(idx);
            idx
        };

        // Medium 0 is the air at the receiver: every flow's final ingress
        // queue (one per upstream node) contends on it, and when the medium
        // is half duplex so does the receiver's acknowledgment egress.
        media.push(Medium::new(streams));
        let ack_egress = {
            let medium = if topo.half_duplex {
                0
            } else {
                media.push(Medium::new(streams));
                media.len() - 1
            };
            add_link(
                &mut links,
                &mut media,
                topo.bottleneck_bps,
                prop,
                topo.queue_capacity,
                medium,
            )
        };

        let sender_cfg = SenderConfig {
            packet_bits: setup.protocol.packet_bits,
            ack_bits: setup.protocol.ack_bits,
            initial_awnd: match setup.variant {
                Variant::Rtps => 1,
                _ => BASELINE_ADVERTISED_WINDOW,
            },
            initial_cwnd: 2.0,
        };

        let mut flows = Vec::with_capacity(m);
        for (i, spec) in setup.flows.iter().enumerate() {
            let private_prop = match spec.base_rtt {
                Some(rtt) => {
                    let one_way = (rtt / 2.0 - topo.hop_delay).max(0.0);
                    SimTime::from_secs_f64(one_way / topo.hops as f64)
                }
                None => prop,
            };
            let mut fwd = Vec::with_capacity(topo.hops + 1);
            let mut rev = Vec::with_capacity(topo.hops + 1);
            rev.push(ack_egress); // receiver's medium first on the ack path
            let mut private_rev = Vec::new();
            for _ in 0..topo.hops {
                media.push(Medium::new(streams));
                let hop_medium = media.len() - 1;
                let f_idx = add_link(
                    &mut links,
                    &mut media,
                    topo.hop_bandwidth_bps,
                    private_prop,
                    topo.queue_capacity,
                    hop_medium,
                );
                let r_medium = if topo.half_duplex {
                    hop_medium
                } else {
                    media.push(Medium::new(streams));
                    media.len() - 1
                };
                let r_idx = add_link(
                    &mut links,
                    &mut media,
                    topo.hop_bandwidth_bps,
                    private_prop,
                    topo.queue_capacity,
                    r_medium,
                );
                fwd.push(f_idx);
                private_rev.push(r_idx);
            }
            // The flow's own ingress queue on the receiver medium.
            let ingress = add_link(
                &mut links,
                &mut media,
                topo.bottleneck_bps,
                prop,
                topo.queue_capacity,
                0,
            );
            fwd.push(ingress);
            rev.extend(private_rev.into_iter().rev());

            flows.push(FlowRuntime {
                sender: SenderState::new(FlowId(i as u32), sender_cfg),
                fwd,
                rev,
                spec: *spec,
            });
        }

        let mut udp = Vec::with_capacity(setup.cross.len());
        for spec in setup.cross.iter() {
            if spec.rate_bps <= 0.0 {
                return Err(SimError::BadSetup("udp rate must be positive".into()));
            }
            media.push(Medium::new(streams));
            let access_medium = media.len() - 1;
            let access = add_link(
                &mut links,
                &mut media,
                topo.hop_bandwidth_bps,
                prop,
                topo.queue_capacity,
                access_medium,
            );
            let ingress = add_link(
                &mut links,
                &mut media,
                topo.bottleneck_bps,
                prop,
                topo.queue_capacity,
                0,
            );
            udp.push(UdpRuntime {
                chain: vec![access, ingress],
                spec: *spec,
                interval: setup.protocol.packet_bits as f64 / spec.rate_bps,
                sent: 0,
                delivered: 0,
            });
        }

        let receiver = match setup.variant {
            Variant::Rtps => {
                let profile = PopularityProfile::from_centralities(setup.centralities.clone())
                    .map_err(|e| SimError::BadSetup(e.to_string()))?;
                let data_ser_bneck = setup.protocol.packet_bits as f64 / topo.bottleneck_bps;
                let data_ser_priv = setup.protocol.packet_bits as f64 / topo.hop_bandwidth_bps;
                let setups: Vec<FlowSetup> = setup
                    .flows
                    .iter()
                    .map(|f| FlowSetup {
                        least_rate: f.least_rate_bps,
                        start: f.start,
                        base_rtt: f.base_rtt.unwrap_or(
                            2.0 * (topo.hops as f64 + 1.0) * topo.hop_delay
                                + data_ser_bneck
                                + topo.hops as f64 * data_ser_priv,
                        ),
                    })
                    .collect();
                let cfg = RtpsConfig {
                    pfaocm: setup.protocol.pfaocm,
                    lccm: LccmParams {
                        epsilon: setup.protocol.epsilon,
                        epoch: setup.protocol.epoch,
                        reinit_period: setup.protocol.reinit_period,
                        initial_capacity: topo.bottleneck_bps,
                        packet_bits: setup.protocol.packet_bits as f64,
                    },
                    packet_bits: setup.protocol.packet_bits as f64,
                    per_arrival_drcm: setup.protocol.per_arrival_drcm,
                };
                ReceiverKind::Rtps(Box::new(RtpsReceiver::new(cfg, profile, &setups)?))
            }
            Variant::DelAck2 | Variant::Dca3 | Variant::Daap4 => {
                let bv = match setup.variant {
                    Variant::DelAck2 => BaselineVariant::DelAck2,
                    Variant::Dca3 => BaselineVariant::Dca3,
                    _ => BaselineVariant::Daap4,
                };
                ReceiverKind::Baseline(
                    (0..m)
                        .map(|i| BaselineReceiver::new(FlowId(i as u32), bv))
                        .collect(),
                )
            }
        };

        let mut sim = Self {
            now: SimTime::ZERO,
            end: SimTime::from_secs_f64(setup.duration),
            queue: BinaryHeap::new(),
            next_order: 0,
            links,
            media,
            flows,
            udp,
            receiver,
            loss: setup.loss,
            rng: ChaCha8Rng::seed_from_u64(setup.seed),
            protocol: setup.protocol.clone(),
            epoch_len: SimTime::from_secs_f64(setup.protocol.epoch),
            scheduled_delay: vec![None; m],
            scheduled_rto: vec![None; m],
            latencies: vec![Vec::new(); m],
            delivered_prev: vec![0; m],
            series: Vec::new(),
        };

        for i in 0..sim.flows.len() {
            let at = SimTime::from_secs_f64(sim.flows[i].spec.start);
            sim.schedule(at, Event::FlowStart(FlowId(i as u32)))?;
            if let Some(cap) = sim.flows[i].spec.cap {
                sim.schedule(
                    SimTime::from_secs_f64(cap.start),
                    Event::CapChange(FlowId(i as u32)),
                )?;
            }
        }
        for s in 0..sim.udp.len() {
            let first = sim.udp_emit_time(s, 1);
            sim.schedule(first, Event::UdpEmit { source: s, k: 1 })?;
        }
        let first_epoch = sim.epoch_len;
        sim.schedule(first_epoch, Event::Epoch)?;

        Ok(sim)
    }

    fn udp_emit_time(&self, source: usize, k: u64) -> SimTime {
        let spec = &self.udp[source].spec;
        SimTime::from_secs_f64(spec.start + k as f64 * self.udp[source].interval)
    }

    fn schedule(&mut self, at: SimTime, event: Event) -> Result<(), SimError> {
        if at < self.now {
            return Err(SimError::PastEvent { at, now: self.now });
        }
        self.queue.push(Entry {
            at,
            order: self.next_order,
            event,
        });
        self.next_order += 1;
        Ok(())
    }

    fn stream_of(seg: &Segment) -> usize {
        seg.flow.index()
    }

    fn stream_dir(seg: &Segment) -> Direction {
        match seg.kind {
            SegmentKind::Data | SegmentKind::Udp => Direction::Forward,
            SegmentKind::Ack => Direction::Reverse,
        }
    }

    fn chain<'a>(flows: &'a [FlowRuntime], udp: &'a [UdpRuntime], seg: &Segment) -> &'a [usize] {
        match seg.kind {
            SegmentKind::Data => &flows[seg.flow.index()].fwd,
            SegmentKind::Ack => &flows[seg.flow.index()].rev,
            SegmentKind::Udp => &udp[seg.flow.index() - flows.len()].chain,
        }
    }

    fn enqueue_on(&mut self, link_idx: usize, seg: Segment) -> Result<(), SimError> {
        let link = &mut self.links[link_idx];
        let medium = link.medium;
        let dir = Self::stream_dir(&seg);
        let stream = Self::stream_of(&seg);
        if link.enqueue(seg, self.now) {
            self.media[medium].activity.add(stream, dir);
            self.try_start_medium(medium)?;
        }
        Ok(())
    }

    /// Starts the next transmission on an idle medium: the member link with
    /// the earliest-waiting head wins, ties to the lowest link index.
    fn try_start_medium(&mut self, medium: usize) -> Result<(), SimError> {
        if self.media[medium].busy {
            return Ok(());
        }
        let mut next: Option<(SimTime, usize)> = None;
        for &li in &self.media[medium].members {
            if let Some(at) = self.links[li].head_wait() {
                if next.is_none_or(|(best, _)| at < best) {
                    next = Some((at, li));
                }
            }
        }
        if let Some((_, li)) = next {
            self.media[medium].busy = true;
            let tx = self.links[li].begin_service();
            self.schedule(self.now + tx, Event::Departure { link: li })?;
        }
        Ok(())
    }

    /// Sends a fresh segment down its route.
    fn transmit(&mut self, seg: Segment) -> Result<(), SimError> {
        let first = Self::chain(&self.flows, &self.udp, &seg)[0];
        self.enqueue_on(first, seg)
    }

    fn sync_delay_timer(&mut self, flow: FlowId) -> Result<(), SimError> {
        let desired = match &self.receiver {
            ReceiverKind::Rtps(rx) => rx.flow(flow).timer_deadline(),
            ReceiverKind::Baseline(rxs) => rxs[flow.index()].timer_deadline(),
        };
        if desired != self.scheduled_delay[flow.index()] {
            if let Some(d) = desired {
                self.schedule(d, Event::DelayTimer { flow, deadline: d })?;
            }
            self.scheduled_delay[flow.index()] = desired;
        }
        Ok(())
    }

    fn sync_rto(&mut self, flow: FlowId) -> Result<(), SimError> {
        let desired = self.flows[flow.index()].sender.rto_deadline();
        if desired != self.scheduled_rto[flow.index()] {
            if let Some(d) = desired {
                self.schedule(d, Event::SenderRto { flow, deadline: d })?;
            }
            self.scheduled_rto[flow.index()] = desired;
        }
        Ok(())
    }

    fn wire_ack(&self, ack: &AckSegment) -> Segment {
        Segment {
            kind: SegmentKind::Ack,
            flow: ack.flow,
            seq: ack.ack,
            size_bits: self.protocol.ack_bits,
            ts_value: ack.ts_value,
            ts_echo: ack.ts_echo,
            send_time: ack.emitted,
            first_send_time: ack.emitted,
            awnd: ack.awnd,
            retransmit: false,
            route_pos: 0,
        }
    }

    fn deliver_data(&mut self, seg: Segment) -> Result<(), SimError> {
        let flow = seg.flow;
        let dup = match &self.receiver {
            ReceiverKind::Rtps(rx) => rx.flow(flow).seq.is_duplicate(seg.seq),
            ReceiverKind::Baseline(rxs) => rxs[flow.index()].is_duplicate(seg.seq),
        };
        if !dup {
            self.latencies[flow.index()]
                .push((self.now - seg.first_send_time).as_secs_f64());
        }
        let ack = match &mut self.receiver {
            ReceiverKind::Rtps(rx) => rx.on_data_packet(&seg, self.now)?,
            ReceiverKind::Baseline(rxs) => rxs[flow.index()].on_data(&seg, self.now),
        };
        self.sync_delay_timer(flow)?;
        if let Some(ack) = ack {
            let wire = self.wire_ack(&ack);
            self.transmit(wire)?;
        }
        Ok(())
    }

    fn deliver_ack(&mut self, seg: Segment) -> Result<(), SimError> {
        let flow = seg.flow;
        let ack = AckSegment {
            flow,
            ack: seg.seq,
            awnd: seg.awnd,
            ts_value: seg.ts_value,
            ts_echo: seg.ts_echo,
            emitted: seg.send_time,
        };
        let out = self.flows[flow.index()].sender.on_ack(&ack, self.now);
        for seg in out {
            self.transmit(seg)?;
        }
        self.sync_rto(flow)?;
        Ok(())
    }

    fn handle(&mut self, event: Event) -> Result<(), SimError> {
        match event {
            Event::FlowStart(flow) => {
                let segs = self.flows[flow.index()].sender.fill_window(self.now);
                for seg in segs {
                    self.transmit(seg)?;
                }
                self.sync_rto(flow)?;
            }
            Event::Departure { link } => {
                let medium = self.links[link].medium;
                let seg = self.links[link].finish_service();
                self.media[medium].busy = false;
                let dir = Self::stream_dir(&seg);
                let stream = Self::stream_of(&seg);
                let window = SimTime::from_nanos(
                    (seg.size_bits as f64 * 1e9 / self.links[link].bandwidth_bps).round() as u64,
                );
                let n_active = self.media[medium].activity.active_streams(self.now, window);
                self.media[medium].activity.remove(stream, dir, self.now);
                if self.loss.sample_loss(n_active, &mut self.rng) {
                    self.links[link].loss_drops += 1;
                } else {
                    self.links[link].delivered += 1;
                    let at = self.now + self.links[link].propagation;
                    self.schedule(at, Event::Arrival { link, seg })?;
                }
                self.try_start_medium(medium)?;
            }
            Event::Arrival { link, mut seg } => {
                let chain = Self::chain(&self.flows, &self.udp, &seg);
                debug_assert_eq!(chain[seg.route_pos as usize], link);
                let next = seg.route_pos as usize + 1;
                if next < chain.len() {
                    let next_link = chain[next];
                    seg.route_pos = next as u16;
                    self.enqueue_on(next_link, seg)?;
                } else {
                    match seg.kind {
                        SegmentKind::Data => self.deliver_data(seg)?,
                        SegmentKind::Ack => self.deliver_ack(seg)?,
                        SegmentKind::Udp => {
                            self.udp[seg.flow.index() - self.flows.len()].delivered += 1;
                        }
                    }
                }
            }
            Event::SenderRto { flow, deadline } => {
                // Stale timers pop silently; the live deadline already has
                // its own event.
                if self.flows[flow.index()].sender.rto_deadline() == Some(deadline) {
                    self.scheduled_rto[flow.index()] = None;
                    let seg = self.flows[flow.index()].sender.on_rto(deadline, self.now);
                    if let Some(seg) = seg {
                        self.transmit(seg)?;
                    }
                    self.sync_rto(flow)?;
                }
            }
            Event::DelayTimer { flow, deadline } => {
                let live = match &self.receiver {
                    ReceiverKind::Rtps(rx) => rx.flow(flow).timer_deadline() == Some(deadline),
                    ReceiverKind::Baseline(rxs) => {
                        rxs[flow.index()].timer_deadline() == Some(deadline)
                    }
                };
                if live {
                    self.scheduled_delay[flow.index()] = None;
                    let ack = match &mut self.receiver {
                        ReceiverKind::Rtps(rx) => rx.on_timer_expiry(flow, deadline, self.now),
                        ReceiverKind::Baseline(rxs) => {
                            rxs[flow.index()].on_timer(deadline, self.now)
                        }
                    };
                    self.sync_delay_timer(flow)?;
                    if let Some(ack) = ack {
                        let wire = self.wire_ack(&ack);
                        self.transmit(wire)?;
                    }
                }
            }
            Event::Epoch => {
                if let ReceiverKind::Rtps(rx) = &mut self.receiver {
                    rx.on_epoch(self.now)?;
                }
                self.snapshot_series();
                let next = self.now + self.epoch_len;
                if next <= self.end {
                    self.schedule(next, Event::Epoch)?;
                }
            }
            Event::UdpEmit { source, k } => {
                let stop = match self.udp[source].spec.stop {
                    Some(s) => SimTime::from_secs_f64(s),
                    None => self.end,
                };
                if self.now <= stop {
                    let flow = FlowId((self.flows.len() + source) as u32);
                    let seg = Segment {
                        kind: SegmentKind::Udp,
                        flow,
                        seq: k,
                        size_bits: self.protocol.packet_bits,
                        ts_value: self.now,
                        ts_echo: SimTime::ZERO,
                        send_time: self.now,
                        first_send_time: self.now,
                        awnd: 0,
                        retransmit: false,
                        route_pos: 0,
                    };
                    self.udp[source].sent += 1;
                    self.transmit(seg)?;
                    let next = self.udp_emit_time(source, k + 1);
                    if next <= self.end && next <= stop {
                        self.schedule(next, Event::UdpEmit { source, k: k + 1 })?;
                    }
                }
            }
            Event::CapChange(flow) => {
                if let Some(cap) = self.flows[flow.index()].spec.cap {
                    let access = self.flows[flow.index()].fwd[0];
                    let link = &mut self.links[access];
                    link.bandwidth_bps = link.bandwidth_bps.min(cap.rate_bps);
                }
            }
        }
        Ok(())
    }

    fn receiver_windows(&self, flow: usize) -> (u32, f64) {
        match &self.receiver {
            ReceiverKind::Rtps(rx) => {
                let fs = rx.flow(FlowId(flow as u32));
                (fs.ws.awnd, fs.ws.da)
            }
            ReceiverKind::Baseline(rxs) => {
                (BASELINE_ADVERTISED_WINDOW, rxs[flow].delay_window())
            }
        }
    }

    fn delivered_unique(&self, flow: usize) -> u64 {
        match &self.receiver {
            ReceiverKind::Rtps(rx) => rx.flow(FlowId(flow as u32)).delivered_unique,
            ReceiverKind::Baseline(rxs) => rxs[flow].delivered_unique,
        }
    }

    fn snapshot_series(&mut self) {
        let t = self.now.as_secs_f64();
        let epoch_s = self.epoch_len.as_secs_f64();
        for i in 0..self.flows.len() {
            let delivered = self.delivered_unique(i);
            let delta = delivered - self.delivered_prev[i];
            self.delivered_prev[i] = delivered;
            let (awnd, dawnd) = self.receiver_windows(i);
            self.series.push(SeriesRow {
                t,
                flow: i as u32,
                goodput_kbps: delta as f64 * self.protocol.packet_bits as f64 / epoch_s / 1000.0,
                awnd,
                dawnd,
                acks_cum: self.flows[i].sender.acks_received,
                retx_cum: self.flows[i].sender.retx_sent,
            });
        }
    }

    /// Processes every event up to and including the horizon, then gathers
    /// the run outcome.
    pub fn run(mut self) -> Result<RunOutcome, SimError> {
        let mut events: u64 = 0;
        while let Some(entry) = self.queue.peek() {
            if entry.at > self.end {
                break;
            }
            let entry = self.queue.pop().unwrap();
            debug_assert!(entry.at >= self.now);
            self.now = entry.at;
            self.handle(entry.event)?;
            events += 1;
        }

        debug_assert!(self.links.iter().all(|l| l.conserves()));

        let max_wait_ratio = match &self.receiver {
            ReceiverKind::Rtps(rx) => rx.max_wait_ratio,
            ReceiverKind::Baseline(rxs) => rxs
                .iter()
                .map(|r| r.max_wait / BASELINE_DELACK_TIMEOUT)
                .fold(0.0, f64::max),
        };

        let mut flows = Vec::with_capacity(self.flows.len());
        for i in 0..self.flows.len() {
            let sender = &self.flows[i].sender;
            let (delivered_unique, dup_data, acks_emitted) = match &self.receiver {
                ReceiverKind::Rtps(rx) => {
                    let fs = rx.flow(FlowId(i as u32));
                    (fs.delivered_unique, fs.dup_data, fs.acks_emitted)
                }
                ReceiverKind::Baseline(rxs) => {
                    let r = &rxs[i];
                    (r.delivered_unique, r.dup_data, r.acks_emitted)
                }
            };
            flows.push(FlowStats {
                data_sent: sender.data_sent,
                retx_sent: sender.retx_sent,
                acks_received: sender.acks_received,
                rto_count: sender.rto_count,
                delivered_unique,
                dup_data,
                acks_emitted,
                latencies: std::mem::take(&mut self.latencies[i]),
            });
        }

        Ok(RunOutcome {
            duration: self.end.as_secs_f64(),
            packet_bits: self.protocol.packet_bits,
            flows,
            series: self.series,
            queue_drops: self.links.iter().map(|l| l.queue_drops).sum(),
            loss_drops: self.links.iter().map(|l| l.loss_drops).sum(),
            offered: self.links.iter().map(|l| l.offered).sum(),
            max_wait_ratio,
            udp_sent: self.udp.iter().map(|u| u.sent).sum(),
            udp_delivered: self.udp.iter().map(|u| u.delivered).sum(),
            events,
        })
    }
}
