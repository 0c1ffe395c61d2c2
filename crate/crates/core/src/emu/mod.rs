//! Deterministic virtual wireless medium.
//!
//! Every transmitted frame is heard by every other node after a fixed link
//! latency. Each hearer then decides, at receive time, whether to keep it:
//! adversary overlays are consulted first, then the node's active ruleset,
//! and finally the destination MAC decides between "received" and
//! "overheard". The medium never forwards frames, so only direct logical
//! links carry traffic.
//!
//! All activity runs on a virtual clock. Nothing here reads wall-clock time.

mod clock;
mod frame;
mod trace;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::Serialize;

pub use clock::{VirtualClock, VirtualTime};
pub(crate) use frame::FrameTag;
pub use frame::{Frame, Protocol};
pub use trace::{render as render_trace, Trace, TraceEvent, TraceKind};

use crate::addr::MacAddr;
use crate::adversary::{AdversaryError, AttackSpec, Direction, Overlay};
use crate::probe::{ProbeOutcome, ProbeReport, PING_INTERVAL_US};
use crate::registry::NodeRecord;
use crate::rules::Ruleset;
use crate::traffic::{FlowSpec, FlowStats, TrafficError};

pub const DEFAULT_LINK_LATENCY_US: u64 = 1_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmuError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("frame source MAC {mac} is not the wireless MAC of `{node}`")]
    MacSpoof { node: String, mac: MacAddr },
    #[error("{rulesets} rulesets for {nodes} nodes")]
    DimensionMismatch { rulesets: usize, nodes: usize },
    #[error("ruleset {index} belongs to `{found}` but node {index} is `{expected}`")]
    OwnerMismatch { index: usize, expected: String, found: String },
    #[error("cannot move the clock back from {now} to {until}")]
    ClockRewind { now: VirtualTime, until: VirtualTime },
}

/// Stable identity of a node inside the medium; unlike registry indices it
/// survives removal of other nodes.
pub type NodeId = u32;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ProtoCounters {
    pub sent: u64,
    pub received: u64,
    pub overheard: u64,
    pub dropped_filter: u64,
    pub dropped_adversary: u64,
}

impl ProtoCounters {
    /// Frames this node accounted for as a hearer.
    pub fn heard(&self) -> u64 {
        self.received + self.overheard + self.dropped_filter + self.dropped_adversary
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    #[serde(rename = "TCP")]
    pub tcp: ProtoCounters,
    #[serde(rename = "UDP")]
    pub udp: ProtoCounters,
    #[serde(rename = "ICMP")]
    pub icmp: ProtoCounters,
    #[serde(rename = "RAW")]
    pub raw: ProtoCounters,
}

impl Counters {
    pub fn get(&self, protocol: Protocol) -> &ProtoCounters {
        match protocol {
            Protocol::Tcp => &self.tcp,
            Protocol::Udp => &self.udp,
            Protocol::Icmp => &self.icmp,
            Protocol::Raw => &self.raw,
        }
    }

    fn get_mut(&mut self, protocol: Protocol) -> &mut ProtoCounters {
        match protocol {
            Protocol::Tcp => &mut self.tcp,
            Protocol::Udp => &mut self.udp,
            Protocol::Icmp => &mut self.icmp,
            Protocol::Raw => &mut self.raw,
        }
    }

    pub fn total(&self) -> ProtoCounters {
        Protocol::ALL.iter().fold(ProtoCounters::default(), |mut acc, &p| {
            let c = self.get(p);
            acc.sent += c.sent;
            acc.received += c.received;
            acc.overheard += c.overheard;
            acc.dropped_filter += c.dropped_filter;
            acc.dropped_adversary += c.dropped_adversary;
            acc
        })
    }
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    pub record: NodeRecord,
    /// `None` until the first topology is applied: the node then hears
    /// everything, like the physical medium.
    pub ruleset: Option<Ruleset>,
    pub counters: Counters,
    pub overlays: Vec<Overlay>,
}

impl NodeState {
    fn adversary_drop(&self, protocol: Protocol, direction: Direction, send_time: u64) -> Option<&Overlay> {
        self.overlays.iter().find(|o| o.drops(protocol, direction, send_time))
    }
}

/// What happened to a frame at one hearer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Fate {
    Received,
    Overheard,
    DropFilter,
    DropAdversary,
}

impl Fate {
    fn trace_kind(self) -> TraceKind {
        match self {
            Fate::Received => TraceKind::Rx,
            Fate::Overheard => TraceKind::Ignored,
            Fate::DropFilter => TraceKind::DropFilter,
            Fate::DropAdversary => TraceKind::DropAdversary,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct FrameFate {
    outstanding: usize,
    outcomes: Vec<(String, Fate)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActiveAttack {
    pub id: u64,
    pub spec: AttackSpec,
    pub launched_at: VirtualTime,
    #[serde(skip)]
    target: NodeId,
}

#[derive(Debug, Clone)]
struct Flow {
    spec: FlowSpec,
    src: NodeId,
    dst: NodeId,
    start: VirtualTime,
    stats: FlowStats,
}

#[derive(Debug, Clone)]
struct PingSession {
    src: NodeId,
    dst: NodeId,
    count: u32,
    timeout_us: u64,
    outcomes: Vec<ProbeOutcome>,
}

#[derive(Debug, Clone)]
enum Event {
    Arrival { frame: Arc<Frame>, receiver: NodeId },
    FlowSend(u64),
    PingSend { ping: u64, seq: u32 },
    AttackExpire(u64),
    External(u64),
}

/// Result of processing one event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Internal,
    /// A timer owned by the caller; see [`Medium::schedule_external`].
    External(u64),
}

#[derive(Debug)]
pub struct Medium {
    nodes: Vec<NodeState>,
    index: HashMap<NodeId, usize>,
    next_node_id: NodeId,
    clock: VirtualClock<Event>,
    link_latency_us: u64,
    next_frame_id: u64,
    trace: Trace,
    fates: BTreeMap<u64, FrameFate>,
    attacks: BTreeMap<u64, ActiveAttack>,
    next_attack_id: u64,
    flows: BTreeMap<u64, Flow>,
    next_flow_id: u64,
    pings: BTreeMap<u64, PingSession>,
    next_ping_id: u64,
}

impl Default for Medium {
    fn default() -> Self {
        Self::new(DEFAULT_LINK_LATENCY_US)
    }
}

impl Medium {
    pub fn new(link_latency_us: u64) -> Self {
        Self {
            nodes: Vec::new(),
            index: HashMap::new(),
            next_node_id: 0,
            clock: VirtualClock::default(),
            link_latency_us,
            next_frame_id: 1,
            trace: Trace::default(),
            fates: BTreeMap::new(),
            attacks: BTreeMap::new(),
            next_attack_id: 1,
            flows: BTreeMap::new(),
            next_flow_id: 1,
            pings: BTreeMap::new(),
            next_ping_id: 1,
        }
    }

    pub fn with_nodes<'a>(link_latency_us: u64, records: impl IntoIterator<Item = &'a NodeRecord>) -> Self {
        let mut m = Self::new(link_latency_us);
        for r in records {
            m.add_node(r.clone());
        }
        m
    }

    pub fn now(&self) -> VirtualTime {
        self.clock.now()
    }

    pub fn link_latency_us(&self) -> u64 {
        self.link_latency_us
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node(&self, name: &str) -> Option<&NodeState> {
        self.nodes.iter().find(|n| n.record.name == name)
    }

    pub fn pending_events(&self) -> usize {
        self.clock.pending()
    }

    /// Appends a record to the trace at the current virtual time.
    pub fn log(&mut self, kind: TraceKind, fields: String) {
        self.trace.push(self.clock.now(), kind, fields);
    }

    pub fn add_node(&mut self, record: NodeRecord) -> NodeId {
        let id = self.next_node_id;
        self.next_node_id += 1;
        self.index.insert(id, self.nodes.len());
        self.nodes.push(NodeState { id, record, ruleset: None, counters: Counters::default(), overlays: Vec::new() });
        id
    }

    /// Removes the node at `index`, ending attacks, flows and pings that
    /// involve it.
    pub fn remove_node(&mut self, index: usize) -> NodeState {
        let removed = self.nodes.remove(index);
        self.reindex();
        let stale: Vec<u64> = self.attacks.values().filter(|a| a.target == removed.id).map(|a| a.id).collect();
        for id in stale {
            if let Some(a) = self.attacks.remove(&id) {
                self.log(TraceKind::AttackOff, format!("id={id} name={} reason=node-removed", a.spec.name));
            }
        }
        self.flows.retain(|_, f| f.src != removed.id && f.dst != removed.id);
        self.pings.retain(|_, p| p.src != removed.id && p.dst != removed.id);
        removed
    }

    fn reindex(&mut self) {
        self.index = self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    }

    fn position(&self, name: &str) -> Result<usize, EmuError> {
        self.nodes.iter().position(|n| n.record.name == name).ok_or_else(|| EmuError::UnknownNode(name.to_string()))
    }

    fn name_for_mac(&self, mac: MacAddr) -> String {
        if mac.is_broadcast() {
            return "*".into();
        }
        self.nodes
            .iter()
            .find(|n| n.record.wireless_mac == mac)
            .map_or_else(|| mac.to_string(), |n| n.record.name.clone())
    }

    /// Replaces every node's ruleset at the current instant. Frames already
    /// in the air are judged by whichever ruleset is active when they arrive.
    pub fn apply_rulesets(&mut self, rulesets: Vec<Ruleset>, label: &str) -> Result<VirtualTime, EmuError> {
        if rulesets.len() != self.nodes.len() {
            return Err(EmuError::DimensionMismatch { rulesets: rulesets.len(), nodes: self.nodes.len() });
        }
        for (index, (rs, node)) in rulesets.iter().zip(&self.nodes).enumerate() {
            if rs.owner != node.record.name {
                return Err(EmuError::OwnerMismatch {
                    index,
                    expected: node.record.name.clone(),
                    found: rs.owner.clone(),
                });
            }
        }
        for (node, rs) in self.nodes.iter_mut().zip(rulesets) {
            node.ruleset = Some(rs);
        }
        let fields = if label.is_empty() {
            format!("nodes={}", self.nodes.len())
        } else {
            format!("{label} nodes={}", self.nodes.len())
        };
        self.log(TraceKind::Apply, fields);
        Ok(self.now())
    }

    /// Puts a frame on the air from `src`. Returns its frame id; the fate at
    /// each hearer is known once the link latency has elapsed
    /// (see [`Medium::take_fate`]).
    pub fn transmit(&mut self, src: &str, frame: Frame) -> Result<u64, EmuError> {
        let index = self.position(src)?;
        let own = self.nodes[index].record.wireless_mac;
        if frame.src_mac != own {
            return Err(EmuError::MacSpoof { node: src.to_string(), mac: frame.src_mac });
        }
        Ok(self.emit(index, frame, true))
    }

    /// Names of the nodes that received frame `frame_id` (destination match
    /// and accepted), once every hearer has decided. Consumes the record.
    pub fn take_fate(&mut self, frame_id: u64) -> Option<Vec<(String, Fate)>> {
        match self.fates.get(&frame_id) {
            Some(f) if f.outstanding == 0 => self.fates.remove(&frame_id).map(|f| f.outcomes),
            _ => None,
        }
    }

    fn emit(&mut self, src_index: usize, mut frame: Frame, track: bool) -> u64 {
        let frame_id = self.next_frame_id;
        self.next_frame_id += 1;
        frame.frame_id = frame_id;
        frame.send_time = self.now();
        let protocol = frame.protocol;
        let sender = &self.nodes[src_index];
        let sender_name = sender.record.name.clone();
        let blocked = sender.adversary_drop(protocol, Direction::Outgoing, frame.send_time).is_some();
        let dst = self.name_for_mac(frame.dst_mac);
        self.log(
            TraceKind::Tx,
            format!(
                "frame={frame_id} src={sender_name} dst={dst} proto={protocol} port={} len={}",
                frame.port,
                frame.payload.len()
            ),
        );
        self.nodes[src_index].counters.get_mut(protocol).sent += 1;
        let hearers: Vec<usize> = (0..self.nodes.len()).filter(|&i| i != src_index).collect();
        if track {
            self.fates.insert(
                frame_id,
                FrameFate { outstanding: if blocked { 0 } else { hearers.len() }, outcomes: Vec::new() },
            );
        }
        if blocked {
            self.log(TraceKind::DropAdversary, format!("frame={frame_id} node={sender_name} dir=out"));
            for &h in &hearers {
                self.nodes[h].counters.get_mut(protocol).dropped_adversary += 1;
                if let Some(f) = self.fates.get_mut(&frame_id) {
                    f.outcomes.push((self.nodes[h].record.name.clone(), Fate::DropAdversary));
                }
            }
            if let FrameTag::Flow(id) = frame.tag {
                if let Some(flow) = self.flows.get_mut(&id) {
                    flow.stats.dropped_adversary += 1;
                }
            }
            return frame_id;
        }
        let at = self.now() + self.link_latency_us;
        let frame = Arc::new(frame);
        for h in hearers {
            let receiver = self.nodes[h].id;
            self.clock.schedule(at, Event::Arrival { frame: Arc::clone(&frame), receiver });
        }
        frame_id
    }

    fn arrive(&mut self, frame: &Frame, receiver: NodeId) {
        let Some(&index) = self.index.get(&receiver) else {
            if let Some(f) = self.fates.get_mut(&frame.frame_id) {
                f.outstanding -= 1;
            }
            return;
        };
        let node = &self.nodes[index];
        let fate = if node.adversary_drop(frame.protocol, Direction::Incoming, frame.send_time).is_some() {
            Fate::DropAdversary
        } else if !node.ruleset.as_ref().is_none_or(|rs| rs.accepts(frame.src_mac)) {
            Fate::DropFilter
        } else if frame.dst_mac == node.record.wireless_mac || frame.dst_mac.is_broadcast() {
            Fate::Received
        } else {
            Fate::Overheard
        };
        let name = node.record.name.clone();
        let counters = self.nodes[index].counters.get_mut(frame.protocol);
        match fate {
            Fate::Received => counters.received += 1,
            Fate::Overheard => counters.overheard += 1,
            Fate::DropFilter => counters.dropped_filter += 1,
            Fate::DropAdversary => counters.dropped_adversary += 1,
        }
        let dir = if fate == Fate::DropAdversary { " dir=in" } else { "" };
        self.log(fate.trace_kind(), format!("frame={} node={name}{dir}", frame.frame_id));
        if let Some(f) = self.fates.get_mut(&frame.frame_id) {
            f.outstanding -= 1;
            f.outcomes.push((name, fate));
        }
        match frame.tag {
            FrameTag::Plain => {}
            FrameTag::Flow(id) => {
                if let Some(flow) = self.flows.get_mut(&id).filter(|f| f.dst == receiver) {
                    match fate {
                        Fate::Received => flow.stats.received += 1,
                        Fate::DropFilter => flow.stats.dropped_filter += 1,
                        Fate::DropAdversary => flow.stats.dropped_adversary += 1,
                        Fate::Overheard => {}
                    }
                }
            }
            FrameTag::EchoRequest { ping, seq } if fate == Fate::Received => {
                let Some(session) = self.pings.get(&ping).filter(|s| s.dst == receiver) else {
                    return;
                };
                let Some(&src_index) = self.index.get(&session.src) else { return };
                let reply = Frame::unicast(
                    &self.nodes[index].record,
                    &self.nodes[src_index].record,
                    Protocol::Icmp,
                    0,
                    frame.payload.clone(),
                )
                .tagged(FrameTag::EchoReply { ping, seq });
                self.emit(index, reply, false);
            }
            FrameTag::EchoReply { ping, seq } if fate == Fate::Received => {
                let now = self.now();
                if let Some(session) = self.pings.get_mut(&ping).filter(|s| s.src == receiver) {
                    if let Some(o) = session.outcomes.get_mut(seq as usize) {
                        if o.reply_us.is_none() && now - o.sent_us <= session.timeout_us {
                            o.reply_us = Some(now);
                        }
                    }
                }
            }
            FrameTag::EchoRequest { .. } | FrameTag::EchoReply { .. } => {}
        }
    }

    /// Schedules a caller-owned timer; it surfaces as [`Step::External`].
    pub fn schedule_external(&mut self, at: VirtualTime, token: u64) {
        self.clock.schedule(at, Event::External(token));
    }

    pub fn cancel_external(&mut self, token: u64) {
        self.clock.retain(|e| !matches!(e, Event::External(t) if *t == token));
    }

    /// Processes the next event due at or before `until`, if any.
    pub fn step(&mut self, until: VirtualTime) -> Option<Step> {
        let (_, event) = self.clock.pop_due(until)?;
        match event {
            Event::Arrival { frame, receiver } => self.arrive(&frame, receiver),
            Event::FlowSend(id) => self.flow_send(id),
            Event::PingSend { ping, seq } => self.ping_send(ping, seq),
            Event::AttackExpire(id) => {
                if let Some(a) = self.attacks.remove(&id) {
                    self.uninstall(&a);
                    self.log(TraceKind::AttackOff, format!("id={id} name={} reason=expired", a.spec.name));
                }
            }
            Event::External(token) => return Some(Step::External(token)),
        }
        Some(Step::Internal)
    }

    /// Moves the clock to `until`, processing every event due on the way.
    /// Caller-owned timers are consumed without effect; use [`Medium::step`]
    /// to observe them.
    pub fn advance(&mut self, until: VirtualTime) -> Result<usize, EmuError> {
        self.check_advance(until)?;
        let mut processed = 0;
        while self.step(until).is_some() {
            processed += 1;
        }
        self.clock.set_now(until);
        Ok(processed)
    }

    pub fn check_advance(&self, until: VirtualTime) -> Result<(), EmuError> {
        if until < self.now() {
            return Err(EmuError::ClockRewind { now: self.now(), until });
        }
        Ok(())
    }

    pub fn finish_advance(&mut self, until: VirtualTime) {
        self.clock.set_now(until);
    }

    // --- adversary ---

    pub fn attacks(&self) -> impl Iterator<Item = &ActiveAttack> {
        self.attacks.values()
    }

    pub fn launch_attack(&mut self, spec: AttackSpec) -> Result<u64, AdversaryError> {
        spec.validate()?;
        let index = self.position(&spec.target).map_err(|_| AdversaryError::UnknownNode(spec.target.clone()))?;
        if self.attacks.values().any(|a| a.spec.name == spec.name) {
            return Err(AdversaryError::DuplicateAttack(spec.name));
        }
        let id = self.next_attack_id;
        self.next_attack_id += 1;
        let now = self.now();
        self.nodes[index].overlays.push(Overlay {
            attack_id: id,
            attack_name: spec.name.clone(),
            protocol: spec.protocol,
            effect: spec.effect(now),
        });
        self.log(
            TraceKind::AttackOn,
            format!("id={id} name={} target={} kind={} proto={}", spec.name, spec.target, spec.kind, spec.protocol),
        );
        if let Some(lifetime) = spec.lifetime_us() {
            self.clock.schedule(now + lifetime, Event::AttackExpire(id));
        }
        let target = self.nodes[index].id;
        self.attacks.insert(id, ActiveAttack { id, spec, launched_at: now, target });
        Ok(id)
    }

    pub fn stop_attack(&mut self, id: u64) -> Result<VirtualTime, AdversaryError> {
        let attack = self.attacks.remove(&id).ok_or_else(|| AdversaryError::UnknownAttack(id.to_string()))?;
        self.uninstall(&attack);
        self.log(TraceKind::AttackOff, format!("id={id} name={} reason=stopped", attack.spec.name));
        Ok(self.now())
    }

    fn uninstall(&mut self, attack: &ActiveAttack) {
        if let Some(&index) = self.index.get(&attack.target) {
            self.nodes[index].overlays.retain(|o| o.attack_id != attack.id);
        }
    }

    /// Sends raw bytes as a RAW frame attributed to `as_node`. Outgoing
    /// attacks on `as_node` apply; receivers filter it like any other frame.
    pub fn inject(&mut self, as_node: &str, bytes: Vec<u8>, dst_mac: MacAddr) -> Result<u64, EmuError> {
        let index = self.position(as_node)?;
        let record = &self.nodes[index].record;
        let dst_ip = self
            .nodes
            .iter()
            .find(|n| n.record.wireless_mac == dst_mac)
            .map_or(std::net::Ipv4Addr::UNSPECIFIED, |n| n.record.wireless_ip);
        let frame = Frame {
            frame_id: 0,
            src_mac: record.wireless_mac,
            dst_mac,
            protocol: Protocol::Raw,
            src_ip: record.wireless_ip,
            dst_ip,
            port: 0,
            payload: bytes,
            send_time: 0,
            tag: FrameTag::Plain,
        };
        Ok(self.emit(index, frame, true))
    }

    // --- traffic ---

    pub fn start_flow(&mut self, spec: FlowSpec) -> Result<u64, TrafficError> {
        spec.validate()?;
        let src = self.position(&spec.src).map_err(|_| TrafficError::UnknownNode(spec.src.clone()))?;
        let dst = self.position(&spec.dst).map_err(|_| TrafficError::UnknownNode(spec.dst.clone()))?;
        let id = self.next_flow_id;
        self.next_flow_id += 1;
        let now = self.now();
        self.flows.insert(
            id,
            Flow { spec, src: self.nodes[src].id, dst: self.nodes[dst].id, start: now, stats: FlowStats::default() },
        );
        self.clock.schedule(now, Event::FlowSend(id));
        Ok(id)
    }

    fn flow_send(&mut self, id: u64) {
        let Some(flow) = self.flows.get(&id) else { return };
        let (Some(&src), Some(&dst)) = (self.index.get(&flow.src), self.index.get(&flow.dst)) else {
            return;
        };
        let spec = &flow.spec;
        let k = flow.stats.sent;
        let frame = Frame::unicast(
            &self.nodes[src].record,
            &self.nodes[dst].record,
            spec.protocol,
            spec.port,
            vec![0u8; spec.payload_len],
        )
        .tagged(FrameTag::Flow(id));
        let next = spec.count.is_none_or(|c| k + 1 < c).then(|| flow.start + (k + 1) * spec.delay_ms * 1_000);
        let now = self.now();
        if let Some(flow) = self.flows.get_mut(&id) {
            flow.stats.sent += 1;
            flow.stats.first_send_us.get_or_insert(now);
            flow.stats.last_send_us = Some(now);
        }
        self.emit(src, frame, false);
        if let Some(at) = next {
            self.clock.schedule(at, Event::FlowSend(id));
        }
    }

    pub fn flow_stats(&self, id: u64) -> Result<FlowStats, TrafficError> {
        self.flows.get(&id).map(|f| f.stats.clone()).ok_or(TrafficError::UnknownFlow(id))
    }

    pub fn flows(&self) -> impl Iterator<Item = (u64, &FlowSpec, &FlowStats)> {
        self.flows.iter().map(|(id, f)| (*id, &f.spec, &f.stats))
    }

    /// Cancels future sends and returns the final snapshot. The flow is
    /// forgotten afterwards.
    pub fn stop_flow(&mut self, id: u64) -> Result<FlowStats, TrafficError> {
        self.flows.remove(&id).map(|f| f.stats).ok_or(TrafficError::UnknownFlow(id))
    }

    // --- probes ---

    /// Schedules `count` echo requests at one-second spacing starting now.
    pub fn start_ping(&mut self, src: &str, dst: &str, count: u32, timeout_ms: u64) -> Result<u64, EmuError> {
        let src = self.nodes[self.position(src)?].id;
        let dst = self.nodes[self.position(dst)?].id;
        let id = self.next_ping_id;
        self.next_ping_id += 1;
        let now = self.now();
        for seq in 0..count {
            self.clock.schedule(now + u64::from(seq) * PING_INTERVAL_US, Event::PingSend { ping: id, seq });
        }
        self.pings.insert(id, PingSession { src, dst, count, timeout_us: timeout_ms * 1_000, outcomes: Vec::new() });
        Ok(id)
    }

    fn ping_send(&mut self, ping: u64, seq: u32) {
        let Some(session) = self.pings.get_mut(&ping) else { return };
        let (Some(&src), Some(&dst)) = (self.index.get(&session.src), self.index.get(&session.dst)) else {
            return;
        };
        let now = self.clock.now();
        session.outcomes.push(ProbeOutcome { seq, sent_us: now, reply_us: None });
        let payload = seq.to_be_bytes().repeat(14);
        let frame = Frame::unicast(&self.nodes[src].record, &self.nodes[dst].record, Protocol::Icmp, 0, payload)
            .tagged(FrameTag::EchoRequest { ping, seq });
        self.emit(src, frame, false);
    }

    /// Virtual time at which every echo of `ping` has either returned or
    /// timed out.
    pub fn ping_deadline(&self, ping: u64) -> Option<VirtualTime> {
        let s = self.pings.get(&ping)?;
        let first = s.outcomes.first().map_or(self.now(), |o| o.sent_us);
        Some(first + u64::from(s.count.saturating_sub(1)) * PING_INTERVAL_US + s.timeout_us)
    }

    pub fn finish_ping(&mut self, ping: u64) -> Option<ProbeReport> {
        let s = self.pings.remove(&ping)?;
        let name = |id: NodeId| self.index.get(&id).map_or_else(String::new, |&i| self.nodes[i].record.name.clone());
        Some(ProbeReport::from_outcomes(&name(s.src), &name(s.dst), s.outcomes))
    }
}
