//! Deterministic packet-level network simulator.
//!
//! Time is an integer count of nanoseconds. Events at equal times run in
//! the order they were scheduled, so a run is a pure function of its
//! inputs and seed. Switches forward with the routes installed by
//! [`Topology::install_routes`]; every directed link is a tail-drop FIFO in
//! front of a store-and-forward transmitter.

pub mod cross;
pub mod cubic;
pub mod link;
mod tcp;
pub mod topology;
mod trace;

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::metrics::DelayRecord;
use crate::packetizer::fragment_sizes;
use crate::time::SimTime;
pub use cross::{CrossSchedule, CrossTrafficSpec, Pattern};
pub use cubic::{CubicParams, CubicState};
pub use link::{Enqueue, LinkState, LinkStats};
pub use tcp::TransportStats;
pub use topology::{
    build_default_topology, build_dumbbell, LinkId, LinkParams, NodeId, NodeKind, Topology,
};
use tcp::{Ack, Receiver, RtoConfig, Sender};
pub use trace::{EventKind, TRACE_HEADER};
use trace::TraceWriter;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no route from {src} to {dst}")]
    Unroutable { src: String, dst: String },
    #[error("writing trace: {0}")]
    Trace(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Applications and cross traffic stop offering data at this time.
    pub duration: SimTime,
    pub seed: u64,
    /// How long after `duration` in-flight data may still drain.
    pub drain_limit: SimTime,
    pub cubic: CubicParams,
    pub min_rto: SimTime,
    /// Retransmission timeout used before the first RTT sample.
    pub initial_rto: SimTime,
    /// Cap on consecutive timeout doublings.
    pub max_backoff: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration: SimTime::from_secs_f64(10.0),
            seed: 0,
            drain_limit: SimTime::from_secs_f64(10.0),
            cubic: CubicParams::default(),
            min_rto: SimTime::from_millis(1),
            initial_rto: SimTime::from_millis(10),
            max_backoff: 6,
        }
    }
}

/// One application message handed to the transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message {
    pub seq: u32,
    pub size: u32,
    pub decimation: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    /// The message reached the receiver; reported when the sender learns it.
    Delivered {
        record: DelayRecord,
        /// Some segment of the message needed more than one transmission.
        retransmitted: bool,
    },
    /// The send buffer was full; the message never entered the network.
    Rejected { seq: u32, send_time: SimTime, size: u32 },
}

/// The application side of a flow.
pub trait MessageSource {
    /// Time of the first emission, if any.
    fn first_send(&mut self) -> Option<SimTime>;

    /// Called at each scheduled emission time. Returns the message to send
    /// (if any) and the time of the next emission.
    fn emit(&mut self, now: SimTime) -> (Option<Message>, Option<SimTime>);

    fn on_feedback(&mut self, _feedback: &Feedback, _now: SimTime) {}
}

pub struct FlowSpec<'a> {
    pub id: u32,
    pub label: String,
    pub src: NodeId,
    pub dst: NodeId,
    /// Bytes of admitted but unacknowledged messages the sender will hold.
    pub send_buffer: u64,
    pub source: &'a mut dyn MessageSource,
}

impl<'a> FlowSpec<'a> {
    pub fn new(id: u32, src: NodeId, dst: NodeId, source: &'a mut dyn MessageSource) -> Self {
        Self {
            id,
            label: format!("flow{id}"),
            src,
            dst,
            send_buffer: 1 << 20,
            source,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowReport {
    pub id: u32,
    pub label: String,
    /// Delivered messages in delivery order.
    pub records: Vec<DelayRecord>,
    pub messages_offered: u64,
    pub messages_rejected: u64,
    /// Admitted but not delivered when the run ended.
    pub messages_undelivered: u64,
    pub messages_retransmitted: u64,
    pub bytes_submitted: u64,
    pub bytes_delivered: u64,
    pub transport: TransportStats,
    /// Unique payload bytes that reached the receiver.
    pub bytes_received: u64,
    pub bytes_duplicate: u64,
    pub bytes_dropped: u64,
    /// Payload still queued or propagating when the run ended.
    pub bytes_in_network: u64,
    /// Congestion window at the end of the run, bytes.
    pub final_cwnd: f64,
    /// Smoothed RTT at the end of the run, seconds.
    pub srtt: f64,
}

impl FlowReport {
    /// Some admitted data never arrived.
    pub fn stalled(&self) -> bool {
        self.messages_undelivered > 0
    }

    /// Rejected plus undelivered messages.
    pub fn messages_lost(&self) -> u64 {
        self.messages_rejected + self.messages_undelivered
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CrossReport {
    pub frames_sent: u64,
    pub frames_delivered: u64,
    pub frames_dropped: u64,
    pub bytes_sent: u64,
    pub bytes_delivered: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkReport {
    pub id: LinkId,
    pub from: String,
    pub to: String,
    pub stats: LinkStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub flows: Vec<FlowReport>,
    /// Open-loop generators, in input order; responsive ones are in
    /// `responsive_cross`.
    pub cross: Vec<CrossReport>,
    pub responsive_cross: Vec<FlowReport>,
    pub links: Vec<LinkReport>,
    pub end_time: SimTime,
    pub events: u64,
}

#[derive(Debug, Clone, Copy)]
enum Body {
    Data { flow: u32, seg: u32, sent_at: SimTime },
    Ack { flow: u32, ack: Ack },
    Cross { gen: u32, k: u64, payload: u32 },
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    dst: NodeId,
    wire: u32,
    body: Body,
}

#[derive(Debug, Clone, Copy)]
enum Action {
    AppSend { flow: u32 },
    CrossSend { gen: u32 },
    Departure { link: LinkId, pkt: Packet },
    Arrival { node: NodeId, pkt: Packet },
    Timer { flow: u32 },
}

struct Event {
    time: SimTime,
    order: u64,
    action: Action,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.order) == (other.time, other.order)
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    /// Reversed so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.order).cmp(&(self.time, self.order))
    }
}

enum Source<'a> {
    Borrowed(&'a mut dyn MessageSource),
    Owned(Box<dyn MessageSource>),
}

impl Source<'_> {
    fn get(&mut self) -> &mut dyn MessageSource {
        match self {
            Source::Borrowed(s) => &mut **s,
            Source::Owned(b) => b.as_mut(),
        }
    }
}

struct Flow<'a> {
    id: u32,
    trace_id: String,
    src: NodeId,
    dst: NodeId,
    /// Largest segment payload: the smaller of the path MTU and the MSS.
    segment_size: usize,
    overhead: u32,
    source: Source<'a>,
    sender: Sender,
    receiver: Receiver,
    timers: BTreeSet<SimTime>,
    report: FlowReport,
    in_network: u64,
}

/// Constant-rate message source for responsive cross traffic.
struct PacedSource {
    schedule: CrossSchedule,
    size: u32,
    seq: u32,
    first: Option<SimTime>,
}

impl MessageSource for PacedSource {
    fn first_send(&mut self) -> Option<SimTime> {
        self.first.take().or_else(|| self.schedule.next())
    }

    fn emit(&mut self, _now: SimTime) -> (Option<Message>, Option<SimTime>) {
        let msg = Message {
            seq: self.seq,
            size: self.size,
            decimation: 1,
        };
        self.seq += 1;
        (Some(msg), self.schedule.next())
    }
}

struct OpenLoop {
    spec: CrossTrafficSpec,
    schedule: CrossSchedule,
    report: CrossReport,
}

struct Sim<'a, 'w> {
    topo: &'a Topology,
    cfg: &'a SimConfig,
    links: Vec<LinkState>,
    flows: Vec<Flow<'a>>,
    gens: Vec<OpenLoop>,
    heap: BinaryHeap<Event>,
    order: u64,
    trace: TraceWriter<'w>,
    events: u64,
}

/// Runs `flows` and `cross` traffic over `topology` and returns per-flow
/// outcomes. When `trace` is given, one CSV row per event is written to it.
pub fn run<'a>(
    topology: &'a Topology,
    cfg: &'a SimConfig,
    flows: Vec<FlowSpec<'a>>,
    cross: &[CrossTrafficSpec],
    trace: Option<&mut dyn Write>,
) -> Result<SimReport, SimError> {
    topology.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sim = Sim {
        topo: topology,
        cfg,
        links: topology
            .links()
            .iter()
            .map(|l| LinkState::new(l.params))
            .collect(),
        flows: Vec::new(),
        gens: Vec::new(),
        heap: BinaryHeap::new(),
        order: 0,
        trace: TraceWriter::new(trace)?,
        events: 0,
    };

    let n_user = flows.len();
    for spec in flows {
        let trace_id = spec.id.to_string();
        sim.add_flow(spec.id, spec.label, trace_id, spec.src, spec.dst, spec.send_buffer, Source::Borrowed(spec.source))?;
    }
    let mut responsive_ids = Vec::new();
    for (i, c) in cross.iter().enumerate() {
        check_host(topology, c.src)?;
        check_host(topology, c.dst)?;
        let path_mtu = sim.path_mtu(c.src, c.dst)?;
        if c.frame_size == 0 || c.frame_size as usize > path_mtu {
            return Err(SimError::Config(format!(
                "cross traffic {i}: frame size {} outside 1..={path_mtu}",
                c.frame_size
            )));
        }
        let stop = c.stop.min(cfg.duration);
        let schedule = CrossSchedule::new(c, stop, &mut rng);
        if c.responsive {
            let source = PacedSource {
                schedule,
                size: c.frame_size,
                seq: 0,
                first: None,
            };
            responsive_ids.push(sim.flows.len());
            sim.add_flow(
                u32::MAX - i as u32,
                format!("x{i}"),
                format!("x{i}"),
                c.src,
                c.dst,
                1 << 20,
                Source::Owned(Box::new(source)),
            )?;
        } else {
            sim.gens.push(OpenLoop {
                spec: c.clone(),
                schedule,
                report: CrossReport::default(),
            });
        }
    }

    for f in 0..sim.flows.len() {
        if let Some(t) = sim.flows[f].source.get().first_send() {
            if t < cfg.duration {
                sim.schedule(t, Action::AppSend { flow: f as u32 });
            }
        }
    }
    for g in 0..sim.gens.len() {
        if let Some(t) = sim.gens[g].schedule.next() {
            sim.schedule(t, Action::CrossSend { gen: g as u32 });
        }
    }

    let horizon = cfg.duration + cfg.drain_limit;
    let mut end_time = SimTime::ZERO;
    while let Some(ev) = sim.heap.pop() {
        if ev.time > horizon {
            break;
        }
        end_time = ev.time;
        sim.events += 1;
        sim.dispatch(ev.time, ev.action)?;
    }
    sim.trace.finish()?;

    let mut flow_reports: Vec<FlowReport> = sim.flows.into_iter().map(Flow::finish).collect();
    let responsive_cross = flow_reports.split_off(n_user);
    Ok(SimReport {
        flows: flow_reports,
        cross: sim.gens.into_iter().map(|g| g.report).collect(),
        responsive_cross,
        links: topology
            .links()
            .iter()
            .zip(&sim.links)
            .map(|(spec, state)| LinkReport {
                id: spec.id,
                from: topology.node(spec.from).name.clone(),
                to: topology.node(spec.to).name.clone(),
                stats: state.stats,
            })
            .collect(),
        end_time,
        events: sim.events,
    })
}

fn check_host(topo: &Topology, n: NodeId) -> Result<(), SimError> {
    match topo.nodes().get(n.0 as usize) {
        Some(node) if node.kind == NodeKind::Host => Ok(()),
        _ => Err(SimError::Config(format!("{n} is not a host"))),
    }
}

impl Flow<'_> {
    fn finish(self) -> FlowReport {
        let mut r = self.report;
        let delivered = self.sender.msgs.iter().filter(|m| m.delivered_at.is_some()).count();
        r.messages_undelivered = (self.sender.msgs.len() - delivered) as u64;
        r.bytes_delivered = r.records.iter().map(|d| d.size_bytes as u64).sum();
        r.messages_retransmitted = (0..self.sender.msgs.len())
            .filter(|&m| self.sender.msg_retransmitted(m))
            .count() as u64;
        r.transport = self.sender.stats;
        r.bytes_received = self.receiver.bytes_received;
        r.bytes_duplicate = self.receiver.bytes_duplicate;
        r.bytes_in_network = self.in_network;
        r.final_cwnd = self.sender.cubic.cwnd;
        r.srtt = self.sender.cubic.rtt_estimate;
        r
    }
}

impl<'a> Sim<'a, '_> {
    fn schedule(&mut self, time: SimTime, action: Action) {
        self.heap.push(Event {
            time,
            order: self.order,
            action,
        });
        self.order += 1;
    }

    fn path_mtu(&self, src: NodeId, dst: NodeId) -> Result<usize, SimError> {
        Ok(self
            .topo
            .route(src, dst)?
            .iter()
            .map(|&l| self.topo.link(l).params.mtu as usize)
            .min()
            .unwrap_or(usize::MAX))
    }

    #[allow(clippy::too_many_arguments)]
    fn add_flow(
        &mut self,
        id: u32,
        label: String,
        trace_id: String,
        src: NodeId,
        dst: NodeId,
        send_buffer: u64,
        source: Source<'a>,
    ) -> Result<(), SimError> {
        check_host(self.topo, src)?;
        check_host(self.topo, dst)?;
        if src == dst {
            return Err(SimError::Config(format!("flow {label}: source equals destination")));
        }
        let segment_size = self.path_mtu(src, dst)?.min(self.cfg.cubic.mss as usize);
        self.topo.route(dst, src)?;
        let overhead = self.topo.link(self.topo.route(src, dst)?[0]).params.per_frame_overhead;
        let rto = RtoConfig {
            min_rto: self.cfg.min_rto,
            initial_rto: self.cfg.initial_rto,
            max_backoff: self.cfg.max_backoff,
        };
        self.flows.push(Flow {
            id,
            report: FlowReport {
                id,
                label: label.clone(),
                ..FlowReport::default()
            },
            trace_id,
            src,
            dst,
            segment_size,
            overhead,
            source,
            sender: Sender::new(self.cfg.cubic, rto, send_buffer),
            receiver: Receiver::default(),
            timers: BTreeSet::new(),
            in_network: 0,
        });
        Ok(())
    }

    fn node_name(&self, n: NodeId) -> &'a str {
        &self.topo.node(n).name
    }

    fn packet_ids(&self, pkt: &Packet) -> (String, u64) {
        match pkt.body {
            Body::Data { flow, seg, .. } => (self.flows[flow as usize].trace_id.clone(), seg as u64),
            Body::Ack { flow, ack } => (self.flows[flow as usize].trace_id.clone(), ack.cum as u64),
            Body::Cross { gen, k, .. } => (format!("c{gen}"), k),
        }
    }

    fn dispatch(&mut self, now: SimTime, action: Action) -> Result<(), SimError> {
        match action {
            Action::AppSend { flow } => self.app_send(now, flow as usize),
            Action::CrossSend { gen } => self.cross_send(now, gen as usize),
            Action::Departure { link, pkt } => {
                let spec = self.topo.link(link);
                let (fid, seq) = self.packet_ids(&pkt);
                self.trace.row(
                    now,
                    EventKind::Departure,
                    &fid,
                    seq,
                    self.node_name(spec.from),
                    format_args!("link={} wire={}", link.0, pkt.wire),
                )?;
                let at = now + spec.params.propagation_delay;
                self.schedule(at, Action::Arrival { node: spec.to, pkt });
                Ok(())
            }
            Action::Arrival { node, pkt } => self.arrival(now, node, pkt),
            Action::Timer { flow } => self.timer(now, flow as usize),
        }
    }

    fn app_send(&mut self, now: SimTime, f: usize) -> Result<(), SimError> {
        let flow = &mut self.flows[f];
        let (msg, next) = flow.source.get().emit(now);
        if let Some(next) = next.filter(|&t| t < self.cfg.duration) {
            self.schedule(next.max(now), Action::AppSend { flow: f as u32 });
        }
        let Some(msg) = msg else { return Ok(()) };
        let flow = &mut self.flows[f];
        flow.report.messages_offered += 1;
        let frags = fragment_sizes(msg.size as usize, flow.segment_size);
        let admitted = flow
            .sender
            .admit(msg.seq, now, msg.size, msg.decimation, &frags);
        let src_name = self.topo.node(flow.src).name.as_str();
        if admitted {
            flow.report.bytes_submitted += msg.size as u64;
            self.trace.row(
                now,
                EventKind::AppSend,
                &flow.trace_id,
                msg.seq as u64,
                src_name,
                format_args!("size={} segments={}", msg.size, frags.len()),
            )?;
            self.transmit(now, f)
        } else {
            flow.report.messages_rejected += 1;
            self.trace.row(
                now,
                EventKind::AppSend,
                &flow.trace_id,
                msg.seq as u64,
                src_name,
                format_args!("size={} rejected", msg.size),
            )?;
            let fb = Feedback::Rejected {
                seq: msg.seq,
                send_time: now,
                size: msg.size,
            };
            flow.source.get().on_feedback(&fb, now);
            Ok(())
        }
    }

    fn transmit(&mut self, now: SimTime, f: usize) -> Result<(), SimError> {
        let flow = &mut self.flows[f];
        let segs = flow.sender.poll_transmit(now);
        let (src, dst, overhead) = (flow.src, flow.dst, flow.overhead);
        for seg in segs {
            let flow = &mut self.flows[f];
            let len = flow.sender.segs[seg as usize].len;
            flow.in_network += len as u64;
            let pkt = Packet {
                dst,
                wire: len + overhead,
                body: Body::Data {
                    flow: f as u32,
                    seg,
                    sent_at: now,
                },
            };
            self.forward(now, src, pkt)?;
        }
        self.arm_timer(now, f);
        Ok(())
    }

    fn arm_timer(&mut self, _now: SimTime, f: usize) {
        let flow = &mut self.flows[f];
        if let Some(d) = flow.sender.timer_deadline {
            if flow.timers.range(..=d).next().is_none() {
                flow.timers.insert(d);
                self.schedule(d, Action::Timer { flow: f as u32 });
            }
        }
    }

    fn timer(&mut self, now: SimTime, f: usize) -> Result<(), SimError> {
        self.flows[f].timers.remove(&now);
        if self.flows[f].sender.on_timer(now) {
            let flow = &self.flows[f];
            self.trace.row(
                now,
                EventKind::TimerFire,
                &flow.trace_id,
                flow.sender.stats.timeouts,
                self.node_name(flow.src),
                format_args!("rto"),
            )?;
            self.transmit(now, f)?;
        }
        self.arm_timer(now, f);
        Ok(())
    }

    fn cross_send(&mut self, now: SimTime, g: usize) -> Result<(), SimError> {
        let gen = &mut self.gens[g];
        let k = gen.report.frames_sent;
        let payload = gen.spec.frame_size;
        gen.report.frames_sent += 1;
        gen.report.bytes_sent += payload as u64;
        let (src, dst) = (gen.spec.src, gen.spec.dst);
        let next = gen.schedule.next();
        let overhead = self
            .topo
            .link(self.topo.route(src, dst)?[0])
            .params
            .per_frame_overhead;
        self.trace.row(
            now,
            EventKind::CrossTrafficSend,
            &format!("c{g}"),
            k,
            self.node_name(src),
            format_args!("size={payload}"),
        )?;
        let pkt = Packet {
            dst,
            wire: payload + overhead,
            body: Body::Cross {
                gen: g as u32,
                k,
                payload,
            },
        };
        self.forward(now, src, pkt)?;
        if let Some(t) = next {
            self.schedule(t, Action::CrossSend { gen: g as u32 });
        }
        Ok(())
    }

    /// Offers `pkt` to the outgoing link of `node` toward its destination.
    fn forward(&mut self, now: SimTime, node: NodeId, pkt: Packet) -> Result<(), SimError> {
        let link = self.topo.next_hop(node, pkt.dst).ok_or_else(|| SimError::Unroutable {
            src: self.node_name(node).to_string(),
            dst: self.node_name(pkt.dst).to_string(),
        })?;
        let (fid, seq) = self.packet_ids(&pkt);
        match self.links[link.0 as usize].link_enqueue(pkt.wire, now) {
            Enqueue::Enqueued { departure } => {
                self.trace.row(
                    now,
                    EventKind::Enqueue,
                    &fid,
                    seq,
                    self.node_name(node),
                    format_args!("link={} wire={}", link.0, pkt.wire),
                )?;
                self.schedule(departure, Action::Departure { link, pkt });
            }
            Enqueue::Dropped => {
                self.trace.row(
                    now,
                    EventKind::Drop,
                    &fid,
                    seq,
                    self.node_name(node),
                    format_args!("link={} wire={}", link.0, pkt.wire),
                )?;
                match pkt.body {
                    Body::Data { flow, seg, .. } => {
                        let flow = &mut self.flows[flow as usize];
                        let len = flow.sender.segs[seg as usize].len as u64;
                        flow.in_network -= len;
                        flow.report.bytes_dropped += len;
                    }
                    Body::Cross { gen, .. } => self.gens[gen as usize].report.frames_dropped += 1,
                    Body::Ack { .. } => {}
                }
            }
        }
        Ok(())
    }

    fn arrival(&mut self, now: SimTime, node: NodeId, pkt: Packet) -> Result<(), SimError> {
        let (fid, seq) = self.packet_ids(&pkt);
        let kind = if node == pkt.dst && matches!(pkt.body, Body::Ack { .. }) {
            EventKind::AckArrival
        } else {
            EventKind::PacketArrival
        };
        self.trace.row(now, kind, &fid, seq, self.node_name(node), format_args!("wire={}", pkt.wire))?;
        if node != pkt.dst {
            return self.forward(now, node, pkt);
        }
        match pkt.body {
            Body::Cross { gen, payload, .. } => {
                let r = &mut self.gens[gen as usize].report;
                r.frames_delivered += 1;
                r.bytes_delivered += payload as u64;
                Ok(())
            }
            Body::Data { flow, seg, sent_at } => self.data_arrival(now, flow as usize, seg, sent_at),
            Body::Ack { flow, ack } => self.ack_arrival(now, flow as usize, ack),
        }
    }

    fn data_arrival(&mut self, now: SimTime, f: usize, seg: u32, sent_at: SimTime) -> Result<(), SimError> {
        let flow = &mut self.flows[f];
        flow.in_network -= flow.sender.segs[seg as usize].len as u64;
        let (ack, delivered) = flow
            .receiver
            .on_data(seg, sent_at, &flow.sender.segs, &flow.sender.msgs);
        for m in delivered {
            let msg = &mut flow.sender.msgs[m];
            msg.delivered_at = Some(now);
            let record = DelayRecord {
                flow_id: flow.id,
                seq: msg.seq,
                send_time: msg.send_time,
                recv_time: now,
                size_bytes: msg.size,
                decimation: msg.decimation,
            };
            self.trace.row(
                now,
                EventKind::Deliver,
                &flow.trace_id,
                msg.seq as u64,
                &self.topo.node(flow.dst).name,
                format_args!("delay_us={}", record.delay()),
            )?;
            flow.report.records.push(record);
        }
        let pkt = Packet {
            dst: flow.src,
            wire: flow.overhead,
            body: Body::Ack { flow: f as u32, ack },
        };
        let at = flow.dst;
        self.forward(now, at, pkt)
    }

    fn ack_arrival(&mut self, now: SimTime, f: usize, ack: Ack) -> Result<(), SimError> {
        let flow = &mut self.flows[f];
        let done = flow.sender.on_ack(ack, now);
        for m in done {
            let msg = &flow.sender.msgs[m];
            let record = DelayRecord {
                flow_id: flow.id,
                seq: msg.seq,
                send_time: msg.send_time,
                recv_time: msg.delivered_at.expect("acknowledged message was delivered"),
                size_bytes: msg.size,
                decimation: msg.decimation,
            };
            let fb = Feedback::Delivered {
                record,
                retransmitted: flow.sender.msg_retransmitted(m),
            };
            flow.source.get().on_feedback(&fb, now);
        }
        self.transmit(now, f)
    }
}

#[cfg(test)]
mod tests;
