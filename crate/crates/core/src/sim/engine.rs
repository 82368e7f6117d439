//! The discrete-event loop: PHY, MAC, traffic, mobility and energy around
//! the per-node protocol state machines.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashSet, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::energy::{EnergyAccount, EnergyUse};
use super::rng::{node_rng, Stream};
use super::scenario::{Scenario, ScenarioError};
use super::topology::{distance, generate_topology, mobility_step, Walk};
use crate::channel::{
    noise_power_db, sample_loss, sound_speed, source_level_db, ChannelSample, Environment, PropagationModel,
};
use crate::metrics::{compute_altn, compute_pdr, delay_stats, lifetime_and_convergence, MetricsReport};
use crate::protocol::{ControlMessage, Destination, NodeState, ProtocolConfig, RxInfo, TimerKind, Transition};
use crate::trace::{TraceKind, TraceRecord};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct PacketId {
    origin: NodeId,
    seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct DataPacket {
    id: PacketId,
    created_s: f64,
    hops: u32,
}

#[derive(Debug, Clone, PartialEq)]
enum Payload {
    Control(ControlMessage),
    Data(DataPacket),
    Ack(PacketId),
}

#[derive(Debug, Clone, PartialEq)]
struct Frame {
    src: NodeId,
    dest: Destination,
    payload: Payload,
    bits: u32,
}

impl Frame {
    fn describe(&self) -> String {
        match &self.payload {
            Payload::Control(m) => {
                let mut s = format!("{} seq={}", m.kind.label(), m.sequence);
                if m.rank.is_finite() {
                    s.push_str(&format!(" rank={:.6}", m.rank));
                } else {
                    s.push_str(" rank=inf");
                }
                if m.kind == crate::protocol::MessageKind::Dao {
                    s.push_str(&format!(" target={}", m.target_id));
                }
                s
            }
            Payload::Data(p) => format!("DATA origin={} seq={} hops={}", p.id.origin, p.id.seq, p.hops),
            Payload::Ack(id) => format!("ACK origin={} seq={}", id.origin, id.seq),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct QueuedData {
    packet: DataPacket,
    attempt: u32,
}

#[derive(Debug, Clone, Copy)]
struct Awaiting {
    packet: DataPacket,
    attempt: u32,
    hop: NodeId,
    gen: u64,
}

#[derive(Debug, Clone)]
struct Reception {
    frame: usize,
    start_s: f64,
    end_s: f64,
    snr_db: f64,
    delay_s: f64,
    corrupted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Start,
    TxStart { node: NodeId, gen: u64 },
    TxEnd { node: NodeId },
    RxEnd { node: NodeId, reception: usize },
    AckTimeout { node: NodeId, gen: u64 },
    Timer { node: NodeId, timer: TimerKind },
    DataGen { node: NodeId },
    MobilityTick,
    IdleCheck { node: NodeId },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time_s: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time_s.total_cmp(&other.time_s).then(self.seq.cmp(&other.seq))
    }
}

struct Runtime {
    state: NodeState,
    energy: EnergyAccount,
    walk: Walk,
    range_m: f64,
    rng_protocol: ChaCha8Rng,
    rng_mac: ChaCha8Rng,
    rng_traffic: ChaCha8Rng,
    rng_mobility: ChaCha8Rng,
    ack_q: VecDeque<Frame>,
    ctrl_q: VecDeque<Frame>,
    data_q: VecDeque<QueuedData>,
    busy_until_s: f64,
    tx_intervals: Vec<(f64, f64)>,
    scheduled_tx: Option<(u64, bool)>,
    gen: u64,
    awaiting: Option<Awaiting>,
    next_data_seq: u64,
    seen: HashSet<PacketId>,
    active_rx: Vec<usize>,
}

impl Runtime {
    fn alive(&self) -> bool {
        self.energy.is_alive()
    }
}

/// Counts from the safety checks run after every protocol transition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SafetyStats {
    pub checks: u64,
    pub parent_changes: u64,
    pub acyclicity_violations: u64,
    pub rank_violations: u64,
    pub parent_cap_violations: u64,
    pub max_parent_table: usize,
    /// Child rank not above the parent's current rank at a parent change.
    /// Transient by nature (ranks travel in DIOs) and reported separately.
    pub global_rank_inversions: u64,
}

impl SafetyStats {
    pub fn is_safe(&self) -> bool {
        self.acyclicity_violations == 0 && self.rank_violations == 0 && self.parent_cap_violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node_id: NodeId,
    pub is_mobile: bool,
    pub final_position: [f64; 3],
    pub final_rank: f64,
    pub preferred_parent_id: Option<NodeId>,
    pub energy: EnergyAccount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub trace: Vec<TraceRecord>,
    pub safety: SafetyStats,
    pub nodes: Vec<NodeSummary>,
    pub events_processed: u64,
}

impl RunOutput {
    pub fn trace_text(&self) -> String {
        let mut s = String::new();
        for r in &self.trace {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }
}

struct Engine<'a> {
    sc: &'a Scenario,
    cfg: ProtocolConfig,
    env: Environment,
    model: PropagationModel,
    noise_db: f64,
    nodes: Vec<Runtime>,
    queue: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
    now: f64,
    frames: Vec<Frame>,
    receptions: Vec<Reception>,
    trace: Vec<TraceRecord>,
    safety: SafetyStats,
    reach: BTreeSet<NodeId>,
    data_sent: u64,
    delivered: Vec<(f64, f64)>,
    control_frames: u64,
    ack_timeout_s: f64,
    events_processed: u64,
}

/// Execute one scenario to completion.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, ScenarioError> {
    scenario.validate()?;
    let mut engine = Engine::new(scenario)?;
    engine.run();
    Ok(engine.finish())
}

impl<'a> Engine<'a> {
    fn new(sc: &'a Scenario) -> Result<Self, ScenarioError> {
        let env = sc.environment;
        let model = sc.propagation_model();
        let noise_db = noise_power_db(&env, sc.frequency_khz, sc.bandwidth_bps)
            .map_err(|e| ScenarioError::new("frequency_khz", e.to_string()))?;
        let mut cfg = sc.protocol_config();
        // exploration starts once a link looks like one at 90% of the node range
        let probe = ChannelSample {
            frequency_khz: sc.frequency_khz,
            distance_m: 0.9 * sc.node_range_m,
            depth_m: sc.area[2] / 2.0,
            bandwidth_hz: sc.bandwidth_bps,
        };
        let loss = sample_loss(&probe, &env, &model).map_err(|e| ScenarioError::new("node_range_m", e.to_string()))?;
        cfg.mobility_snr_threshold_db = source_level_db(sc.tx_long_w) - loss - noise_db;

        let states = generate_topology(sc, &cfg)?;
        let nodes = states
            .into_iter()
            .map(|state| {
                let id = state.node_id;
                let (energy_j, range_m) = if state.is_root {
                    (sc.initial_sink_energy_j, sc.sink_range_m)
                } else {
                    (sc.initial_node_energy_j, sc.node_range_m)
                };
                Runtime {
                    energy: EnergyAccount::new(energy_j, sc.idle_w),
                    walk: Walk::idle(),
                    range_m,
                    rng_protocol: node_rng(sc.seed, id, Stream::Protocol),
                    rng_mac: node_rng(sc.seed, id, Stream::Mac),
                    rng_traffic: node_rng(sc.seed, id, Stream::Traffic),
                    rng_mobility: node_rng(sc.seed, id, Stream::Mobility),
                    ack_q: VecDeque::new(),
                    ctrl_q: VecDeque::new(),
                    data_q: VecDeque::new(),
                    busy_until_s: 0.0,
                    tx_intervals: Vec::new(),
                    scheduled_tx: None,
                    gen: 0,
                    awaiting: None,
                    next_data_seq: 0,
                    seen: HashSet::new(),
                    active_rx: Vec::new(),
                    state,
                }
            })
            .collect();

        let slowest = sound_speed(&env, 0.0, sc.sound_speed_mode)
            .min(sound_speed(&env, sc.area[2], sc.sound_speed_mode))
            .max(1.0);
        let max_range = sc.node_range_m.max(sc.sink_range_m);
        let ack_air = sc.link_ack_bytes as f64 * 8.0 / sc.bandwidth_bps;
        let ack_timeout_s = 2.0 * max_range / slowest + ack_air + 0.05;

        Ok(Self {
            sc,
            cfg,
            env,
            model,
            noise_db,
            nodes,
            queue: BinaryHeap::new(),
            next_seq: 0,
            now: 0.0,
            frames: Vec::new(),
            receptions: Vec::new(),
            trace: Vec::new(),
            safety: SafetyStats::default(),
            reach: BTreeSet::new(),
            data_sent: 0,
            delivered: Vec::new(),
            control_frames: 0,
            ack_timeout_s,
            events_processed: 0,
        })
    }

    fn schedule(&mut self, time_s: f64, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Event { time_s, seq, kind }));
    }

    fn record(&mut self, node: NodeId, kind: TraceKind, peer: Option<NodeId>, detail: impl Into<String>) {
        self.trace.push(TraceRecord::new(self.now, node, kind, peer, detail));
    }

    fn run(&mut self) {
        self.schedule(0.0, EventKind::Start);
        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.time_s > self.sc.sim_duration_s {
                break;
            }
            assert!(ev.time_s >= self.now, "event clock moved backwards");
            self.now = ev.time_s;
            self.events_processed += 1;
            match ev.kind {
                EventKind::Start => self.on_start(),
                EventKind::TxStart { node, gen } => self.on_tx_start(node, gen),
                EventKind::TxEnd { node } => self.mac_kick(node),
                EventKind::RxEnd { node, reception } => self.on_rx_end(node, reception),
                EventKind::AckTimeout { node, gen } => self.on_ack_timeout(node, gen),
                EventKind::Timer { node, timer } => self.on_timer(node, timer, ev.time_s),
                EventKind::DataGen { node } => self.on_data_gen(node),
                EventKind::MobilityTick => self.on_mobility_tick(),
                EventKind::IdleCheck { node } => self.on_idle_check(node),
            }
        }
        self.now = self.sc.sim_duration_s;
        for i in 0..self.nodes.len() {
            if self.nodes[i].alive() && self.nodes[i].energy.settle_idle(self.now).is_some() {
                self.kill(i as NodeId);
            }
        }
    }

    // -----------------------------------------------------------------------
    // Start-up, traffic, mobility
    // -----------------------------------------------------------------------

    fn on_start(&mut self) {
        self.update_reach(true);
        for i in 0..self.nodes.len() {
            let id = i as NodeId;
            let n = &mut self.nodes[i];
            let t = n.state.start(0.0, &self.cfg, &mut n.rng_protocol);
            self.apply(id, None, t);
            if !self.nodes[i].state.is_root {
                let gap = self.exp_gap(id);
                self.schedule(gap, EventKind::DataGen { node: id });
            }
            self.schedule_idle_check(id);
        }
        if self.nodes.iter().any(|n| n.state.is_mobile) {
            self.schedule(self.sc.mobility_tick_s, EventKind::MobilityTick);
        }
    }

    fn exp_gap(&mut self, node: NodeId) -> f64 {
        let u: f64 = 1.0 - self.nodes[node as usize].rng_traffic.gen::<f64>();
        -u.ln() / self.sc.packet_rate_pps
    }

    fn on_data_gen(&mut self, node: NodeId) {
        let i = node as usize;
        if !self.nodes[i].alive() {
            return;
        }
        let seq = self.nodes[i].next_data_seq;
        self.nodes[i].next_data_seq += 1;
        let packet = DataPacket { id: PacketId { origin: node, seq }, created_s: self.now, hops: 0 };
        self.nodes[i].seen.insert(packet.id);
        self.data_sent += 1;
        self.record(node, TraceKind::Gen, None, format!("DATA origin={node} seq={seq}"));
        self.enqueue_data(node, packet);
        let gap = self.exp_gap(node);
        self.schedule(self.now + gap, EventKind::DataGen { node });
    }

    fn enqueue_data(&mut self, node: NodeId, packet: DataPacket) {
        let n = &mut self.nodes[node as usize];
        if n.data_q.len() >= self.sc.queue_capacity {
            self.record(
                node,
                TraceKind::Drop,
                None,
                format!("DATA origin={} seq={} reason=queue-full", packet.id.origin, packet.id.seq),
            );
            return;
        }
        n.data_q.push_back(QueuedData { packet, attempt: 0 });
        self.mac_kick(node);
    }

    fn on_mobility_tick(&mut self) {
        let dt = self.sc.mobility_tick_s;
        let start = self.now - dt;
        for i in 0..self.nodes.len() {
            let n = &mut self.nodes[i];
            if !n.state.is_mobile || !n.alive() {
                continue;
            }
            let p = mobility_step(n.state.position, &mut n.walk, start, dt, &mut n.rng_mobility, self.sc);
            n.state.set_position(p);
            self.record(i as NodeId, TraceKind::Pos, None, format!("{:.6} {:.6} {:.6}", p[0], p[1], p[2]));
        }
        self.update_reach(false);
        let next = self.now + dt;
        if next <= self.sc.sim_duration_s {
            self.schedule(next, EventKind::MobilityTick);
        }
    }

    /// Nodes with a bidirectional multi-hop path to the sink.
    fn update_reach(&mut self, force: bool) {
        let mut seen = BTreeSet::new();
        if self.nodes[0].alive() {
            let mut frontier = vec![0usize];
            seen.insert(0 as NodeId);
            while let Some(u) = frontier.pop() {
                for v in 0..self.nodes.len() {
                    if seen.contains(&(v as NodeId)) || !self.nodes[v].alive() {
                        continue;
                    }
                    let range = self.nodes[u].range_m.min(self.nodes[v].range_m);
                    if distance(&self.nodes[u].state.position, &self.nodes[v].state.position) <= range {
                        seen.insert(v as NodeId);
                        frontier.push(v);
                    }
                }
            }
        }
        seen.remove(&0);
        if force || seen != self.reach {
            let detail = seen.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" ");
            self.reach = seen;
            self.record(0, TraceKind::Reach, None, detail);
        }
    }

    // -----------------------------------------------------------------------
    // Energy
    // -----------------------------------------------------------------------

    fn schedule_idle_check(&mut self, node: NodeId) {
        if let Some(t) = self.nodes[node as usize].energy.idle_exhaustion_s() {
            if t <= self.sc.sim_duration_s {
                self.schedule(t.max(self.now), EventKind::IdleCheck { node });
            }
        }
    }

    fn on_idle_check(&mut self, node: NodeId) {
        let i = node as usize;
        if !self.nodes[i].alive() {
            return;
        }
        let died = self.nodes[i].energy.settle_idle(self.now).is_some();
        let exhausted = self.nodes[i].energy.idle_exhaustion_s().is_some_and(|t| t <= self.now + 1e-9);
        if died || exhausted {
            if !died {
                let rest = self.nodes[i].energy.residual_j();
                self.nodes[i].energy.debit(EnergyUse::Idle, rest, 1.0, self.now);
            }
            self.kill(node);
        }
    }

    fn debit(&mut self, node: NodeId, kind: EnergyUse, power_w: f64, duration_s: f64) -> bool {
        let ok = self.nodes[node as usize].energy.debit(kind, power_w, duration_s, self.now);
        if !ok {
            self.kill(node);
        } else {
            self.schedule_idle_check(node);
        }
        ok
    }

    fn kill(&mut self, node: NodeId) {
        let i = node as usize;
        self.nodes[i].energy.death_s = Some(self.now);
        self.record(node, TraceKind::Death, None, format!("residual_pj={}", self.nodes[i].energy.residual_pj));
        let n = &mut self.nodes[i];
        n.ack_q.clear();
        n.ctrl_q.clear();
        n.data_q.clear();
        n.awaiting = None;
        n.scheduled_tx = None;
        n.gen += 1;
        self.update_reach(false);
    }

    // -----------------------------------------------------------------------
    // Protocol glue
    // -----------------------------------------------------------------------

    fn apply(&mut self, node: NodeId, prev_parent: Option<Option<NodeId>>, t: Transition) {
        let i = node as usize;
        for u in t.timers {
            self.schedule(u.at_s, EventKind::Timer { node, timer: u.timer });
        }
        for out in t.outbound {
            let bits = out.msg.size_bytes * 8;
            self.nodes[i].ctrl_q.push_back(Frame { src: node, dest: out.dest, payload: Payload::Control(out.msg), bits });
        }
        if let Some(prev) = prev_parent {
            self.check_safety(node, prev);
        }
        self.mac_kick(node);
    }

    fn check_safety(&mut self, node: NodeId, prev: Option<NodeId>) {
        let i = node as usize;
        self.safety.checks += 1;
        let table = self.nodes[i].state.parent_table.len();
        self.safety.max_parent_table = self.safety.max_parent_table.max(table);
        if table > self.cfg.max_parents {
            self.safety.parent_cap_violations += 1;
            self.record(node, TraceKind::Violation, None, format!("parent-cap table={table}"));
        }
        if let Err(e) = self.nodes[i].state.check_invariants(&self.cfg) {
            if table <= self.cfg.max_parents {
                self.safety.rank_violations += 1;
                self.record(node, TraceKind::Violation, None, format!("rank {}", e.replace(',', ";")));
            }
        }
        let now_parent = self.nodes[i].state.preferred_parent_id;
        if now_parent == prev {
            return;
        }
        self.safety.parent_changes += 1;
        let st = &self.nodes[i].state;
        let table_ids = st.parent_table.iter().map(|r| r.parent_id.to_string()).collect::<Vec<_>>().join(";");
        let rank = if st.rank.is_finite() { format!("{:.6}", st.rank) } else { "inf".to_string() };
        self.record(node, TraceKind::Parent, now_parent, format!("rank={rank} table={table_ids}"));
        if let Some(p) = now_parent {
            if self.nodes[p as usize].state.rank >= self.nodes[i].state.rank {
                self.safety.global_rank_inversions += 1;
            }
            // a new cycle must run through the edge just added
            let mut visited = BTreeSet::from([node]);
            let mut cur = p;
            loop {
                if !visited.insert(cur) {
                    self.safety.acyclicity_violations += 1;
                    self.record(node, TraceKind::Violation, Some(p), "cycle");
                    break;
                }
                match self.nodes[cur as usize].state.preferred_parent_id {
                    Some(next) => cur = next,
                    None => break,
                }
            }
        }
    }

    fn on_timer(&mut self, node: NodeId, timer: TimerKind, at: f64) {
        let i = node as usize;
        if !self.nodes[i].alive() || self.nodes[i].state.timers.get(timer) != Some(at) {
            return;
        }
        self.record(node, TraceKind::Timer, None, timer.label());
        let prev = self.nodes[i].state.preferred_parent_id;
        let n = &mut self.nodes[i];
        let t = n.state.timer_expiry(timer, at, &self.cfg, &mut n.rng_protocol);
        self.apply(node, Some(prev), t);
    }

    // -----------------------------------------------------------------------
    // MAC
    // -----------------------------------------------------------------------

    fn mac_kick(&mut self, node: NodeId) {
        let i = node as usize;
        let now = self.now;
        let n = &mut self.nodes[i];
        if !n.alive() || n.busy_until_s > now {
            return;
        }
        if let Some((_, immediate)) = n.scheduled_tx {
            if immediate || n.ack_q.is_empty() {
                return;
            }
            // acknowledgements pre-empt a pending backoff
            n.scheduled_tx = None;
        }
        let delay = if !n.ack_q.is_empty() {
            Some(0.0)
        } else if n.awaiting.is_some() {
            None
        } else if !n.ctrl_q.is_empty() || (!n.data_q.is_empty() && n.state.preferred_parent_id.is_some()) {
            Some(n.rng_mac.gen_range(0.0..self.sc.mac_backoff_max_s.max(f64::MIN_POSITIVE)))
        } else {
            None
        };
        if let Some(d) = delay {
            n.gen += 1;
            let gen = n.gen;
            n.scheduled_tx = Some((gen, d == 0.0));
            self.schedule(now + d, EventKind::TxStart { node, gen });
        }
    }

    fn on_tx_start(&mut self, node: NodeId, gen: u64) {
        let i = node as usize;
        let n = &mut self.nodes[i];
        if n.scheduled_tx.map(|(g, _)| g) != Some(gen) || !n.alive() {
            return;
        }
        n.scheduled_tx = None;
        let frame = if let Some(f) = n.ack_q.pop_front() {
            f
        } else if n.awaiting.is_some() {
            return;
        } else if let Some(f) = n.ctrl_q.pop_front() {
            f
        } else if let Some(q) = n.data_q.pop_front() {
            match n.state.next_hop(q.attempt) {
                Some(hop) => {
                    n.gen += 1;
                    n.awaiting = Some(Awaiting { packet: q.packet, attempt: q.attempt, hop, gen: n.gen });
                    Frame {
                        src: node,
                        dest: Destination::Unicast(hop),
                        payload: Payload::Data(q.packet),
                        bits: self.sc.data_packet_bytes * 8,
                    }
                }
                None => {
                    n.data_q.push_front(q);
                    return;
                }
            }
        } else {
            return;
        };
        self.transmit(node, frame);
    }

    fn link_snr_and_delay(&self, a: usize, b: usize, power_w: f64) -> (f64, f64, f64) {
        let pa = &self.nodes[a].state.position;
        let pb = &self.nodes[b].state.position;
        let d = distance(pa, pb);
        let depth = (pa[2] + pb[2]) / 2.0;
        let sample = ChannelSample {
            frequency_khz: self.sc.frequency_khz,
            distance_m: d.max(1.0),
            depth_m: depth,
            bandwidth_hz: self.sc.bandwidth_bps,
        };
        let loss = sample_loss(&sample, &self.env, &self.model).unwrap_or(f64::INFINITY);
        let snr = source_level_db(power_w) - loss - self.noise_db;
        let v = sound_speed(&self.env, depth, self.sc.sound_speed_mode);
        (d, snr, d / v)
    }

    fn transmit(&mut self, node: NodeId, frame: Frame) {
        let i = node as usize;
        let airtime = frame.bits as f64 / self.sc.bandwidth_bps;
        let power = match frame.dest {
            Destination::Broadcast => self.sc.tx_long_w,
            Destination::Unicast(d) => {
                let dist = distance(&self.nodes[i].state.position, &self.nodes[d as usize].state.position);
                if dist > self.sc.long_tx_threshold_m {
                    self.sc.tx_long_w
                } else {
                    self.sc.tx_short_w
                }
            }
        };
        if !self.debit(node, EnergyUse::Tx, power, airtime) {
            return;
        }
        let peer = match frame.dest {
            Destination::Broadcast => None,
            Destination::Unicast(d) => Some(d),
        };
        self.record(node, TraceKind::Tx, peer, frame.describe());
        if matches!(frame.payload, Payload::Control(_)) {
            self.control_frames += 1;
        }
        let start = self.now;
        let end = start + airtime;
        {
            let n = &mut self.nodes[i];
            n.busy_until_s = end;
            n.tx_intervals.retain(|(_, e)| *e >= start);
            n.tx_intervals.push((start, end));
            // half duplex: whatever we were hearing is lost
            for &r in &n.active_rx {
                let rec = &mut self.receptions[r];
                if rec.start_s < end && start < rec.end_s {
                    rec.corrupted = true;
                }
            }
        }
        let awaiting_gen = match (&frame.payload, self.nodes[i].awaiting) {
            (Payload::Data(_), Some(a)) => Some(a.gen),
            _ => None,
        };
        let frame_idx = self.frames.len();
        self.frames.push(frame);
        let range = self.nodes[i].range_m;
        for j in 0..self.nodes.len() {
            if j == i || !self.nodes[j].alive() {
                continue;
            }
            let (d, snr, prop) = self.link_snr_and_delay(i, j, power);
            if d > range {
                continue;
            }
            let rs = start + prop;
            let re = end + prop;
            let idx = self.receptions.len();
            let mut corrupted = self.nodes[j].tx_intervals.iter().any(|(s, e)| *s < re && rs < *e);
            let now = self.now;
            let active = std::mem::take(&mut self.nodes[j].active_rx);
            let mut kept = Vec::with_capacity(active.len() + 1);
            for r in active {
                let other = &mut self.receptions[r];
                if other.end_s < now {
                    continue;
                }
                if other.start_s < re && rs < other.end_s {
                    other.corrupted = true;
                    corrupted = true;
                }
                kept.push(r);
            }
            kept.push(idx);
            self.nodes[j].active_rx = kept;
            self.receptions.push(Reception { frame: frame_idx, start_s: rs, end_s: re, snr_db: snr, delay_s: prop, corrupted });
            self.schedule(re, EventKind::RxEnd { node: j as NodeId, reception: idx });
        }
        self.schedule(end, EventKind::TxEnd { node });
        if let Some(gen) = awaiting_gen {
            self.schedule(end + self.ack_timeout_s, EventKind::AckTimeout { node, gen });
        }
    }

    fn on_ack_timeout(&mut self, node: NodeId, gen: u64) {
        let i = node as usize;
        let Some(a) = self.nodes[i].awaiting.filter(|a| a.gen == gen) else { return };
        if !self.nodes[i].alive() {
            return;
        }
        self.nodes[i].awaiting = None;
        let prev = self.nodes[i].state.preferred_parent_id;
        let t = self.nodes[i].state.link_result(a.hop, false, self.now, &self.cfg);
        let next = a.attempt + 1;
        if next < self.sc.max_link_attempts {
            self.nodes[i].data_q.push_front(QueuedData { packet: a.packet, attempt: next });
        } else {
            self.record(
                node,
                TraceKind::Drop,
                Some(a.hop),
                format!("DATA origin={} seq={} reason=retries", a.packet.id.origin, a.packet.id.seq),
            );
        }
        self.apply(node, Some(prev), t);
    }

    fn on_rx_end(&mut self, node: NodeId, reception: usize) {
        let i = node as usize;
        if !self.nodes[i].alive() {
            return;
        }
        let rec = self.receptions[reception].clone();
        let frame = self.frames[rec.frame].clone();
        let airtime = frame.bits as f64 / self.sc.bandwidth_bps;
        if !self.debit(node, EnergyUse::Rx, self.sc.rx_w, airtime) {
            return;
        }
        let addressed = match frame.dest {
            Destination::Broadcast => true,
            Destination::Unicast(d) => d == node,
        };
        if rec.corrupted || rec.snr_db < self.sc.snr_threshold_db {
            if addressed {
                let reason = if rec.corrupted { "collision" } else { "snr" };
                self.record(node, TraceKind::RxLost, Some(frame.src), format!("{} reason={reason}", frame.describe()));
            }
            return;
        }
        let src = frame.src;
        let prev = self.nodes[i].state.preferred_parent_id;
        if !addressed {
            let t = self.nodes[i].state.observe_frame(src, rec.snr_db, self.now, &self.cfg);
            self.apply(node, None, t);
            return;
        }
        self.record(node, TraceKind::Rx, Some(src), frame.describe());
        match frame.payload {
            Payload::Control(msg) => {
                let rx = RxInfo { snr_db: rec.snr_db, delay_s: rec.delay_s };
                let n = &mut self.nodes[i];
                let t = n.state.process_control_message(&msg, rx, self.now, &self.cfg, &mut n.rng_protocol);
                self.apply(node, Some(prev), t);
            }
            Payload::Ack(id) => {
                let t = self.nodes[i].state.observe_frame(src, rec.snr_db, self.now, &self.cfg);
                let mut t = t;
                if let Some(a) = self.nodes[i].awaiting.filter(|a| a.hop == src && a.packet.id == id) {
                    let _ = a;
                    self.nodes[i].awaiting = None;
                    let more = self.nodes[i].state.link_result(src, true, self.now, &self.cfg);
                    t.outbound.extend(more.outbound);
                    t.timers.extend(more.timers);
                }
                self.apply(node, Some(prev), t);
            }
            Payload::Data(mut packet) => {
                if !self.nodes[i].state.is_attached() {
                    // no route upward: stay silent so the sender fails over
                    let t = self.nodes[i].state.orphan_traffic(self.now);
                    self.apply(node, Some(prev), t);
                    return;
                }
                let ack = Frame {
                    src: node,
                    dest: Destination::Unicast(src),
                    payload: Payload::Ack(packet.id),
                    bits: self.sc.link_ack_bytes * 8,
                };
                self.nodes[i].ack_q.push_back(ack);
                let t = self.nodes[i].state.observe_frame(src, rec.snr_db, self.now, &self.cfg);
                self.apply(node, Some(prev), t);
                if !self.nodes[i].seen.insert(packet.id) {
                    return;
                }
                packet.hops += 1;
                if self.nodes[i].state.is_root {
                    self.delivered.push((packet.created_s, self.now));
                    self.record(
                        node,
                        TraceKind::Deliver,
                        Some(packet.id.origin),
                        format!("DATA origin={} seq={} hops={} delay={:.9}", packet.id.origin, packet.id.seq, packet.hops, self.now - packet.created_s),
                    );
                    return;
                }
                if packet.hops >= self.sc.data_ttl {
                    self.record(
                        node,
                        TraceKind::Drop,
                        None,
                        format!("DATA origin={} seq={} reason=ttl", packet.id.origin, packet.id.seq),
                    );
                    return;
                }
                if !self.debit(node, EnergyUse::Aggregation, self.sc.aggregation_w, airtime) {
                    return;
                }
                self.record(
                    node,
                    TraceKind::Fwd,
                    Some(src),
                    format!("DATA origin={} seq={} hops={}", packet.id.origin, packet.id.seq, packet.hops),
                );
                self.enqueue_data(node, packet);
            }
        }
    }

    // -----------------------------------------------------------------------
    // Results
    // -----------------------------------------------------------------------

    fn finish(self) -> RunOutput {
        let sc = self.sc;
        let sensors: Vec<&Runtime> = self.nodes.iter().filter(|n| !n.state.is_root).collect();
        let deaths: Vec<f64> = sensors.iter().filter_map(|n| n.energy.death_s).collect();
        let alive_sensors = sensors.len() - deaths.len();
        let altn = compute_altn(&deaths, alive_sensors, sensors.len(), sc.predetermined_lifetime_s)
            .expect("death counts are consistent");
        let delivered = self.delivered.len() as u64;
        let pdr = compute_pdr(self.data_sent, delivered).expect("sink never receives more than was generated");
        let delays = delay_stats(&self.delivered).expect("acoustic delays are positive");
        let life = lifetime_and_convergence(&self.trace, sc.node_count, sc.convergence_window_s, sc.sim_duration_s);
        let report = MetricsReport {
            pdr_percent: pdr,
            altn_s: altn,
            first_death_s: life.first_death_s,
            median_death_s: life.median_death_s,
            mean_e2e_delay_s: delays.map(|d| d.mean_s),
            delay_jitter_s: delays.map(|d| d.jitter_s),
            convergence_time_s: life.convergence_time_s,
            alive_node_count: self.nodes.iter().filter(|n| n.alive()).count(),
            per_node_energy_j: self.nodes.iter().map(|n| (n.state.node_id, n.energy.residual_j())).collect(),
            control_overhead_packets: self.control_frames,
            data_sent: self.data_sent,
            data_delivered: delivered,
            predetermined_lifetime_s: sc.predetermined_lifetime_s,
        };
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| NodeSummary {
                node_id: n.state.node_id,
                is_mobile: n.state.is_mobile,
                final_position: n.state.position,
                final_rank: n.state.rank,
                preferred_parent_id: n.state.preferred_parent_id,
                energy: n.energy,
            })
            .collect();
        RunOutput { report, trace: self.trace, safety: self.safety, nodes, events_processed: self.events_processed }
    }
}
