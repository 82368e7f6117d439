//! Per-node RPLUW/RPLUWM state machine.
//!
//! Every handler takes the node by `&mut self` and returns a [`Transition`]
//! describing what the node wants sent and which timers it armed. The engine
//! owns the clock and the radio; nothing here performs I/O. Given the same
//! state, input, time and RNG state, a handler always produces the same output.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::message::{seq_newer, ControlMessage, Destination, MessageKind, Outbound, RxInfo};
use super::rank::{compute_rank, RankWeights, INFINITE_RANK, ROOT_RANK};
use super::trickle::{TrickleConfig, TrickleEvent, TrickleState};
use crate::madm::{
    ahp_weights, default_comparison_matrix, select_parents, standard_criteria, CriterionSpec,
    ParentRecord,
};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Static network: trickle, DIS/DIO repair, no neighbour discovery.
    Rpluw,
    /// Mobile network: adds the linkage and mobility timers and IPv6 ND.
    Rpluwm,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Rpluw => "RPLUW",
            Mode::Rpluwm => "RPLUWM",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub mode: Mode,
    /// Parent table cap k̄. 1 gives single-parent operation.
    pub max_parents: usize,
    pub rank_weights: RankWeights,
    pub max_depth_m: f64,
    pub trickle: TrickleConfig,
    /// ARSSI smoothing factor β.
    pub arssi_beta: f64,
    /// SNR floor (dB) mapped to a normalised ARSSI of 0.
    pub arssi_floor_db: f64,
    /// SNR span (dB) above the floor mapped onto [0, 1].
    pub arssi_span_db: f64,
    /// A parent acknowledges a DAO only if the child's smoothed SNR reaches this.
    pub dao_ack_snr_db: f64,
    /// Below this smoothed SNR to the preferred parent a node starts exploring.
    pub mobility_snr_threshold_db: f64,
    /// Upper bound of the uniform response-timer delay.
    pub response_delay_max_s: f64,
    /// Mobility timer period, 1/λ.
    pub mobility_period_s: f64,
    /// Relative MADM margin a challenger needs to replace the preferred parent.
    pub switch_hysteresis: f64,
    pub criteria: Vec<CriterionSpec>,
    pub madm_weights: Vec<f64>,
    pub dao_retry_s: f64,
    pub dao_max_attempts: u32,
    /// Consecutive unacknowledged data frames after which a parent is dropped.
    pub link_failure_limit: u32,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        let criteria = standard_criteria();
        let madm_weights = ahp_weights(&default_comparison_matrix(&criteria));
        Self {
            mode: Mode::Rpluw,
            max_parents: 4,
            rank_weights: RankWeights::default(),
            max_depth_m: 500.0,
            trickle: TrickleConfig::default(),
            arssi_beta: 0.3,
            arssi_floor_db: 10.0,
            arssi_span_db: 60.0,
            dao_ack_snr_db: 10.0,
            mobility_snr_threshold_db: 10.0,
            response_delay_max_s: 1.0,
            mobility_period_s: 10.0,
            switch_hysteresis: 0.05,
            criteria,
            madm_weights,
            dao_retry_s: 2.0,
            dao_max_attempts: 3,
            link_failure_limit: 3,
        }
    }
}

impl ProtocolConfig {
    pub fn i_max_s(&self) -> f64 {
        self.trickle.i_max_s()
    }

    /// How long an unrefreshed candidate, descendant or blacklist entry lives.
    pub fn state_lifetime_s(&self) -> f64 {
        3.0 * self.i_max_s()
    }

    pub fn arssi_norm(&self, snr_db: f64) -> f64 {
        ((snr_db - self.arssi_floor_db) / self.arssi_span_db).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TimerKind {
    Trickle,
    Linkage,
    Mobility,
    Response,
    DaoRetry,
    DaoRefresh,
}

impl TimerKind {
    pub fn label(self) -> &'static str {
        match self {
            TimerKind::Trickle => "trickle",
            TimerKind::Linkage => "linkage",
            TimerKind::Mobility => "mobility",
            TimerKind::Response => "response",
            TimerKind::DaoRetry => "dao-retry",
            TimerKind::DaoRefresh => "dao-refresh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimerUpdate {
    pub timer: TimerKind,
    pub at_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transition {
    pub outbound: Vec<Outbound>,
    pub timers: Vec<TimerUpdate>,
}

impl Transition {
    fn merge(&mut self, other: Transition) {
        self.outbound.extend(other.outbound);
        self.timers.extend(other.timers);
    }

    pub fn is_empty(&self) -> bool {
        self.outbound.is_empty() && self.timers.is_empty()
    }
}

/// What a node knows about a neighbour that advertised itself via DIO or RA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub rank: f64,
    pub hop_count: u32,
    pub depth_m: f64,
    pub residual_energy_j: f64,
    pub delay_ms: f64,
    pub last_heard_s: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub attempts: u32,
    pub acks: u32,
    pub consecutive_failures: u32,
}

impl LinkStats {
    pub fn etx(&self) -> f64 {
        (self.attempts as f64 + 1.0) / (self.acks as f64 + 1.0)
    }

    pub fn pdr(&self) -> f64 {
        (self.acks as f64 + 1.0) / (self.attempts as f64 + 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootEntry {
    pub root_id: NodeId,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Descendant {
    via: NodeId,
    expires_s: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timers {
    pub trickle: Option<f64>,
    pub linkage: Option<f64>,
    pub mobility: Option<f64>,
    pub response: Option<f64>,
    pub dao_retry: Option<f64>,
    pub dao_refresh: Option<f64>,
}

impl Timers {
    fn slot(&mut self, kind: TimerKind) -> &mut Option<f64> {
        match kind {
            TimerKind::Trickle => &mut self.trickle,
            TimerKind::Linkage => &mut self.linkage,
            TimerKind::Mobility => &mut self.mobility,
            TimerKind::Response => &mut self.response,
            TimerKind::DaoRetry => &mut self.dao_retry,
            TimerKind::DaoRefresh => &mut self.dao_refresh,
        }
    }

    pub fn get(&self, kind: TimerKind) -> Option<f64> {
        match kind {
            TimerKind::Trickle => self.trickle,
            TimerKind::Linkage => self.linkage,
            TimerKind::Mobility => self.mobility,
            TimerKind::Response => self.response,
            TimerKind::DaoRetry => self.dao_retry,
            TimerKind::DaoRefresh => self.dao_refresh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub node_id: NodeId,
    pub is_root: bool,
    pub position: [f64; 3],
    pub depth_m: f64,
    pub rank: f64,
    pub hop_count: u32,
    pub parent_table: Vec<ParentRecord>,
    pub preferred_parent_id: Option<NodeId>,
    pub dodag_root_list: Vec<RootEntry>,
    pub trickle: TrickleState,
    pub trickle_running: bool,
    pub timers: Timers,
    pub residual_energy_j: f64,
    pub is_mobile: bool,
    pub arssi_by_neighbor: BTreeMap<NodeId, f64>,
    pub candidates: BTreeMap<NodeId, Candidate>,
    pub confirmed: BTreeSet<NodeId>,
    pub link_stats: BTreeMap<NodeId, LinkStats>,
    pub neighbors_last_heard: BTreeMap<NodeId, f64>,
    pending_dao: BTreeMap<NodeId, u32>,
    blacklist: BTreeMap<NodeId, f64>,
    descendants: BTreeMap<NodeId, Descendant>,
    next_seq: [u16; 8],
    last_seq_seen: BTreeMap<(NodeId, MessageKind), u16>,
    probe_sent_s: Option<f64>,
    detached_at_s: Option<f64>,
    rank_before_detach: f64,
    last_poison_s: Option<f64>,
}

impl NodeState {
    pub fn new_root(node_id: NodeId, position: [f64; 3], energy_j: f64, cfg: &ProtocolConfig) -> Self {
        let mut s = Self::blank(node_id, position, energy_j, false, cfg);
        s.is_root = true;
        s.rank = ROOT_RANK;
        s.hop_count = 0;
        s.dodag_root_list.push(RootEntry { root_id: node_id, position });
        s
    }

    pub fn new_sensor(
        node_id: NodeId,
        position: [f64; 3],
        energy_j: f64,
        is_mobile: bool,
        cfg: &ProtocolConfig,
    ) -> Self {
        Self::blank(node_id, position, energy_j, is_mobile, cfg)
    }

    fn blank(node_id: NodeId, position: [f64; 3], energy_j: f64, is_mobile: bool, cfg: &ProtocolConfig) -> Self {
        Self {
            node_id,
            is_root: false,
            position,
            depth_m: position[2],
            rank: INFINITE_RANK,
            hop_count: u32::MAX,
            parent_table: Vec::new(),
            preferred_parent_id: None,
            dodag_root_list: Vec::new(),
            trickle: TrickleState::new(&cfg.trickle),
            trickle_running: false,
            timers: Timers::default(),
            residual_energy_j: energy_j,
            is_mobile,
            arssi_by_neighbor: BTreeMap::new(),
            candidates: BTreeMap::new(),
            confirmed: BTreeSet::new(),
            link_stats: BTreeMap::new(),
            neighbors_last_heard: BTreeMap::new(),
            pending_dao: BTreeMap::new(),
            blacklist: BTreeMap::new(),
            descendants: BTreeMap::new(),
            next_seq: [0; 8],
            last_seq_seen: BTreeMap::new(),
            probe_sent_s: None,
            detached_at_s: None,
            rank_before_detach: INFINITE_RANK,
            last_poison_s: None,
        }
    }

    pub fn is_attached(&self) -> bool {
        self.is_root || self.preferred_parent_id.is_some()
    }

    pub fn set_position(&mut self, position: [f64; 3]) {
        self.position = position;
        self.depth_m = position[2];
    }

    /// Recorded rank of the preferred parent, as last advertised.
    pub fn preferred_parent_rank(&self) -> Option<f64> {
        self.preferred_parent_id.and_then(|p| self.candidates.get(&p)).map(|c| c.rank)
    }

    pub fn is_descendant(&self, id: NodeId, now: f64) -> bool {
        self.descendants.get(&id).is_some_and(|d| d.expires_s >= now)
    }

    /// Checks the node-local invariants; returns a description of the first violation.
    pub fn check_invariants(&self, cfg: &ProtocolConfig) -> Result<(), String> {
        if self.parent_table.len() > cfg.max_parents {
            return Err(format!(
                "node {} holds {} parents (cap {})",
                self.node_id,
                self.parent_table.len(),
                cfg.max_parents
            ));
        }
        if self.is_root {
            if self.rank != ROOT_RANK || !self.parent_table.is_empty() {
                return Err(format!("root {} has rank {} or parents", self.node_id, self.rank));
            }
            return Ok(());
        }
        if let Some(p) = self.preferred_parent_id {
            if !self.parent_table.iter().any(|r| r.parent_id == p) {
                return Err(format!("node {} prefers {} outside its table", self.node_id, p));
            }
            match self.preferred_parent_rank() {
                Some(pr) if self.rank > pr => {}
                other => {
                    return Err(format!(
                        "node {} rank {} not above parent {} rank {:?}",
                        self.node_id, self.rank, p, other
                    ))
                }
            }
        }
        Ok(())
    }

    // -----------------------------------------------------------------------
    // ARSSI
    // -----------------------------------------------------------------------

    /// Exponential smoothing of link SNR samples; the first sample initialises.
    pub fn update_arssi(&mut self, neighbor: NodeId, sample: f64, beta: f64) {
        if !sample.is_finite() {
            return;
        }
        let v = match self.arssi_by_neighbor.get(&neighbor) {
            Some(&s) => (1.0 - beta) * s + beta * sample,
            None => sample,
        };
        self.arssi_by_neighbor.insert(neighbor, v);
    }

    pub fn arssi_of(&self, neighbor: NodeId) -> Option<f64> {
        self.arssi_by_neighbor.get(&neighbor).copied()
    }

    /// Bookkeeping for any frame heard from `from`, addressed to us or not.
    pub fn observe_frame(&mut self, from: NodeId, snr_db: f64, now: f64, cfg: &ProtocolConfig) -> Transition {
        self.update_arssi(from, snr_db, cfg.arssi_beta);
        self.neighbors_last_heard.insert(from, now);
        if let Some(c) = self.candidates.get_mut(&from) {
            c.last_heard_s = now;
        }
        let mut t = Transition::default();
        if Some(from) == self.preferred_parent_id {
            self.probe_sent_s = None;
            if cfg.mode == Mode::Rpluwm {
                t.timers.push(self.arm(TimerKind::Linkage, now + cfg.i_max_s()));
            }
        }
        t
    }

    // -----------------------------------------------------------------------
    // Start-up
    // -----------------------------------------------------------------------

    /// Initial actions at simulation start: the root advertises immediately.
    pub fn start<R: Rng + ?Sized>(&mut self, now: f64, cfg: &ProtocolConfig, _rng: &mut R) -> Transition {
        let mut t = Transition::default();
        if self.is_root {
            self.trickle.restart();
            self.trickle_running = true;
            t.outbound.push(broadcast(self.dio(MessageKind::Dio)));
            t.timers.push(self.arm(TimerKind::Trickle, now + self.trickle.interval_s()));
        } else if cfg.mode == Mode::Rpluwm {
            t.timers.push(self.arm(TimerKind::Mobility, now + cfg.mobility_period_s));
        }
        t
    }

    // -----------------------------------------------------------------------
    // Control messages
    // -----------------------------------------------------------------------

    /// Handle one received control message.
    pub fn process_control_message<R: Rng + ?Sized>(
        &mut self,
        msg: &ControlMessage,
        rx: RxInfo,
        now: f64,
        cfg: &ProtocolConfig,
        rng: &mut R,
    ) -> Transition {
        if msg.sender_id == self.node_id {
            return Transition::default();
        }
        if msg.kind.is_neighbor_discovery() && cfg.mode == Mode::Rpluw {
            return Transition::default();
        }
        let key = (msg.sender_id, msg.kind);
        if let Some(&last) = self.last_seq_seen.get(&key) {
            if !seq_newer(msg.sequence, last) {
                return Transition::default();
            }
        }
        self.last_seq_seen.insert(key, msg.sequence);

        let mut t = self.observe_frame(msg.sender_id, rx.snr_db, now, cfg);
        let more = match msg.kind {
            MessageKind::Dio => self.on_advertisement(msg, rx, now, cfg, true),
            MessageKind::Dao => self.on_dao(msg, now, cfg),
            MessageKind::DaoAck => self.on_dao_ack(msg, now, cfg),
            MessageKind::Dis => self.on_dis(now, cfg, rng),
            MessageKind::Ns | MessageKind::Na | MessageKind::Rs | MessageKind::Ra => {
                self.nd_dispatch(msg, rx, now, cfg)
            }
        };
        t.merge(more);
        t
    }

    /// IPv6 neighbour discovery exchange; ignored entirely in static mode.
    pub fn neighbor_discovery_step<R: Rng + ?Sized>(
        &mut self,
        msg: &ControlMessage,
        rx: RxInfo,
        now: f64,
        cfg: &ProtocolConfig,
        rng: &mut R,
    ) -> Transition {
        if !msg.kind.is_neighbor_discovery() {
            return Transition::default();
        }
        self.process_control_message(msg, rx, now, cfg, rng)
    }

    fn nd_dispatch(&mut self, msg: &ControlMessage, rx: RxInfo, now: f64, cfg: &ProtocolConfig) -> Transition {
        let mut t = Transition::default();
        match msg.kind {
            MessageKind::Ns => {
                let na = self.control(MessageKind::Na, msg.sender_id);
                t.outbound.push(Outbound { dest: Destination::Unicast(msg.sender_id), msg: na });
            }
            MessageKind::Na => {
                // reachability and ARSSI were refreshed by observe_frame
            }
            MessageKind::Rs => {
                if self.is_attached() {
                    let ra = self.dio(MessageKind::Ra);
                    t.outbound.push(Outbound { dest: Destination::Unicast(msg.sender_id), msg: ra });
                }
            }
            MessageKind::Ra => t.merge(self.on_advertisement(msg, rx, now, cfg, false)),
            _ => {}
        }
        t
    }

    fn on_advertisement(
        &mut self,
        msg: &ControlMessage,
        rx: RxInfo,
        now: f64,
        cfg: &ProtocolConfig,
        is_dio: bool,
    ) -> Transition {
        let mut t = Transition::default();
        if self.is_root {
            return t;
        }
        let sender = msg.sender_id;
        if !msg.rank.is_finite() {
            self.candidates.remove(&sender);
            if self.parent_table.iter().any(|r| r.parent_id == sender) {
                t.merge(self.lose_parent(sender, now, cfg));
            }
            return t;
        }
        if !self.dodag_root_list.iter().any(|r| r.root_id == msg.dodag_root_id) {
            self.dodag_root_list
                .push(RootEntry { root_id: msg.dodag_root_id, position: msg.root_position });
        }
        let previous_rank = self.candidates.get(&sender).map(|c| c.rank);
        self.candidates.insert(
            sender,
            Candidate {
                rank: msg.rank,
                hop_count: msg.hop_count,
                depth_m: msg.depth_m,
                residual_energy_j: msg.residual_energy_j,
                delay_ms: rx.delay_s * 1000.0,
                last_heard_s: now,
            },
        );
        if Some(sender) == self.preferred_parent_id {
            if previous_rank != Some(msg.rank) {
                // the parent moved in the graph; follow it
                if is_dio {
                    t.timers.extend(self.inconsistency(now));
                }
                t.merge(self.adopt_rank_from_preferred(now, cfg));
            } else if is_dio {
                self.trickle.step(TrickleEvent::Consistency);
            }
        }
        t.merge(self.reselect(now, cfg));
        t
    }

    fn on_dao(&mut self, msg: &ControlMessage, now: f64, cfg: &ProtocolConfig) -> Transition {
        let mut t = Transition::default();
        let via = msg.sender_id;
        let target = msg.target_id;
        if target == self.node_id || Some(target) == self.preferred_parent_id || Some(via) == self.preferred_parent_id {
            return t;
        }
        self.descendants
            .insert(target, Descendant { via, expires_s: now + cfg.state_lifetime_s() });
        if !self.is_attached() {
            // a child that still routes through us missed the poison
            return self.orphan_traffic(now);
        }
        if target == via {
            // a direct child cannot also serve as one of our parents
            if self.parent_table.iter().any(|r| r.parent_id == via) {
                self.parent_table.retain(|r| r.parent_id != via);
                self.confirmed.remove(&via);
                self.pending_dao.remove(&via);
            }
            let snr = self.arssi_of(via).unwrap_or(f64::NEG_INFINITY);
            if snr >= cfg.dao_ack_snr_db {
                let ack = self.control(MessageKind::DaoAck, via);
                t.outbound.push(Outbound { dest: Destination::Unicast(via), msg: ack });
            }
        }
        if let Some(p) = self.preferred_parent_id {
            let mut up = self.control(MessageKind::Dao, target);
            up.arssi = self.arssi_of(p).unwrap_or(0.0);
            t.outbound.push(Outbound { dest: Destination::Unicast(p), msg: up });
        }
        t
    }

    /// Traffic from a node that still treats us as its parent while we are
    /// detached: repeat the poison advertisement, at most once per second.
    pub fn orphan_traffic(&mut self, now: f64) -> Transition {
        let mut t = Transition::default();
        if self.is_attached() || self.last_poison_s.is_some_and(|p| now - p < 1.0) {
            return t;
        }
        self.last_poison_s = Some(now);
        t.outbound.push(broadcast(self.dio(MessageKind::Dio)));
        t
    }

    fn on_dao_ack(&mut self, msg: &ControlMessage, now: f64, cfg: &ProtocolConfig) -> Transition {
        let sender = msg.sender_id;
        if self.is_root || !self.candidates.contains_key(&sender) {
            return Transition::default();
        }
        self.pending_dao.remove(&sender);
        self.confirmed.insert(sender);
        self.reselect(now, cfg)
    }

    fn on_dis<R: Rng + ?Sized>(&mut self, now: f64, cfg: &ProtocolConfig, rng: &mut R) -> Transition {
        let mut t = Transition::default();
        if !self.is_attached() {
            return t;
        }
        t.timers.extend(self.inconsistency(now));
        if self.timers.response.is_none() {
            let delay = rng.gen_range(0.0..=cfg.response_delay_max_s);
            t.timers.push(self.arm(TimerKind::Response, now + delay));
        }
        t
    }

    // -----------------------------------------------------------------------
    // Timers
    // -----------------------------------------------------------------------

    /// Handle a timer event. Events for timers that are not armed at `now`
    /// (cancelled or superseded) do nothing.
    pub fn timer_expiry<R: Rng + ?Sized>(
        &mut self,
        timer: TimerKind,
        now: f64,
        cfg: &ProtocolConfig,
        rng: &mut R,
    ) -> Transition {
        if self.timers.get(timer) != Some(now) {
            return Transition::default();
        }
        *self.timers.slot(timer) = None;
        let _ = rng;
        match timer {
            TimerKind::Trickle => self.on_trickle(now),
            TimerKind::Response => {
                let mut t = Transition::default();
                if self.is_attached() {
                    t.outbound.push(broadcast(self.dio(MessageKind::Dio)));
                }
                t
            }
            TimerKind::Linkage => self.on_linkage(now, cfg),
            TimerKind::Mobility => self.on_mobility(now, cfg),
            TimerKind::DaoRetry => self.on_dao_retry(now, cfg),
            TimerKind::DaoRefresh => {
                let mut t = Transition::default();
                if self.preferred_parent_id.is_some() {
                    let parents: Vec<NodeId> = self
                        .parent_table
                        .iter()
                        .map(|r| r.parent_id)
                        .filter(|id| self.confirmed.contains(id))
                        .collect();
                    for p in parents {
                        t.outbound.push(self.dao_to(p));
                    }
                    t.timers.push(self.arm(TimerKind::DaoRefresh, now + cfg.i_max_s()));
                }
                t
            }
        }
    }

    fn on_trickle(&mut self, now: f64) -> Transition {
        let mut t = Transition::default();
        if !self.trickle_running || !self.is_attached() {
            return t;
        }
        let out = self.trickle.step(TrickleEvent::IntervalExpired);
        if out.emit_dio {
            t.outbound.push(broadcast(self.dio(MessageKind::Dio)));
        }
        t.timers.push(self.arm(TimerKind::Trickle, now + self.trickle.interval_s()));
        t
    }

    fn on_linkage(&mut self, now: f64, cfg: &ProtocolConfig) -> Transition {
        let mut t = Transition::default();
        if cfg.mode != Mode::Rpluwm || self.is_root {
            return t;
        }
        // expiry means no packet arrived from the parent for a whole window
        t.outbound.push(broadcast(self.control(MessageKind::Dis, self.node_id)));
        if let Some(p) = self.preferred_parent_id {
            t.merge(self.lose_parent(p, now, cfg));
        }
        if self.timers.linkage.is_none() {
            t.timers.push(self.arm(TimerKind::Linkage, now + cfg.i_max_s()));
        }
        t
    }

    fn on_mobility(&mut self, now: f64, cfg: &ProtocolConfig) -> Transition {
        let mut t = Transition::default();
        if cfg.mode != Mode::Rpluwm || self.is_root {
            return t;
        }
        match self.preferred_parent_id {
            Some(p) => {
                let last = self.neighbors_last_heard.get(&p).copied().unwrap_or(f64::NEG_INFINITY);
                match self.probe_sent_s {
                    Some(sent) if last < sent => {
                        // probe unanswered for a full period
                        self.probe_sent_s = None;
                        t.outbound.push(broadcast(self.control(MessageKind::Dis, self.node_id)));
                        t.merge(self.lose_parent(p, now, cfg));
                    }
                    _ => {
                        if now - last >= cfg.mobility_period_s {
                            self.probe_sent_s = Some(now);
                            let ns = self.control(MessageKind::Ns, p);
                            t.outbound.push(Outbound { dest: Destination::Unicast(p), msg: ns });
                        } else {
                            self.probe_sent_s = None;
                        }
                        let weak = self.arssi_of(p).is_some_and(|a| a < cfg.mobility_snr_threshold_db);
                        if weak {
                            t.outbound.push(broadcast(self.control(MessageKind::Dis, self.node_id)));
                            t.merge(self.reselect(now, cfg));
                        }
                    }
                }
            }
            None => {
                if self.is_mobile {
                    t.outbound.push(broadcast(self.control(MessageKind::Rs, self.node_id)));
                }
            }
        }
        t.timers.push(self.arm(TimerKind::Mobility, now + cfg.mobility_period_s));
        t
    }

    fn on_dao_retry(&mut self, now: f64, cfg: &ProtocolConfig) -> Transition {
        let mut t = Transition::default();
        let pending: Vec<(NodeId, u32)> = self.pending_dao.iter().map(|(k, v)| (*k, *v)).collect();
        let mut dropped = false;
        for (p, attempts) in pending {
            if attempts >= cfg.dao_max_attempts {
                self.pending_dao.remove(&p);
                self.blacklist.insert(p, now + cfg.state_lifetime_s());
                self.parent_table.retain(|r| r.parent_id != p);
                dropped = true;
            } else {
                self.pending_dao.insert(p, attempts + 1);
                let mut dao = self.control(MessageKind::Dao, self.node_id);
                dao.arssi = self.arssi_of(p).unwrap_or(0.0);
                t.outbound.push(Outbound { dest: Destination::Unicast(p), msg: dao });
            }
        }
        if !self.pending_dao.is_empty() {
            t.timers.push(self.arm(TimerKind::DaoRetry, now + cfg.dao_retry_s));
        }
        if dropped {
            t.merge(self.reselect(now, cfg));
        }
        t
    }

    // -----------------------------------------------------------------------
    // Data plane hooks
    // -----------------------------------------------------------------------

    /// Next hop for the `attempt`-th transmission of a data frame. Retries
    /// rotate over confirmed parents when more than one is allowed.
    pub fn next_hop(&self, attempt: u32) -> Option<NodeId> {
        let preferred = self.preferred_parent_id?;
        let mut hops = vec![preferred];
        hops.extend(
            self.parent_table
                .iter()
                .map(|r| r.parent_id)
                .filter(|&id| id != preferred && self.confirmed.contains(&id)),
        );
        Some(hops[attempt as usize % hops.len()])
    }

    /// Outcome of a unicast data transmission to `neighbor`.
    pub fn link_result(&mut self, neighbor: NodeId, acked: bool, now: f64, cfg: &ProtocolConfig) -> Transition {
        let stats = self.link_stats.entry(neighbor).or_default();
        stats.attempts += 1;
        if acked {
            stats.acks += 1;
            stats.consecutive_failures = 0;
            return Transition::default();
        }
        stats.consecutive_failures += 1;
        if stats.consecutive_failures >= cfg.link_failure_limit
            && self.parent_table.iter().any(|r| r.parent_id == neighbor)
        {
            stats.consecutive_failures = 0;
            return self.lose_parent(neighbor, now, cfg);
        }
        Transition::default()
    }

    // -----------------------------------------------------------------------
    // Parent management
    // -----------------------------------------------------------------------

    fn eligible(&self, id: NodeId, c: &Candidate, now: f64, cfg: &ProtocolConfig) -> bool {
        if !c.rank.is_finite() || now - c.last_heard_s > cfg.state_lifetime_s() {
            return false;
        }
        if self.blacklist.get(&id).is_some_and(|&until| until > now) {
            return false;
        }
        if self.is_descendant(id, now) {
            return false;
        }
        match self.detached_at_s {
            _ if self.preferred_parent_id.is_some() => c.rank < self.rank,
            Some(at) => c.last_heard_s >= at || c.rank < self.rank_before_detach,
            None => true,
        }
    }

    fn record_for(&self, id: NodeId, c: &Candidate) -> ParentRecord {
        let stats = self.link_stats.get(&id).copied().unwrap_or_default();
        ParentRecord {
            parent_id: id,
            hop_count: c.hop_count,
            residual_energy_j: c.residual_energy_j,
            arssi: self.arssi_of(id).unwrap_or(0.0),
            delay_ms: c.delay_ms,
            etx: stats.etx(),
            link_pdr: stats.pdr(),
            depth_m: c.depth_m,
            madm_value: 0.0,
        }
    }

    /// Rebuild the parent table from the candidate set and pick the preferred parent.
    fn reselect(&mut self, now: f64, cfg: &ProtocolConfig) -> Transition {
        let mut t = Transition::default();
        if self.is_root {
            return t;
        }
        let pool: Vec<ParentRecord> = self
            .candidates
            .iter()
            .filter(|(id, c)| self.eligible(**id, c, now, cfg))
            .map(|(id, c)| self.record_for(*id, c))
            .collect();
        let ranked = select_parents(&pool, &cfg.madm_weights, &cfg.criteria, pool.len()).table;
        let value = |id: NodeId| ranked.iter().find(|r| r.parent_id == id).map(|r| r.madm_value);

        let incumbent = self.preferred_parent_id.filter(|p| value(*p).is_some() && self.confirmed.contains(p));
        let best_confirmed = ranked.iter().find(|r| self.confirmed.contains(&r.parent_id)).map(|r| r.parent_id);
        let margin = 1.0 + cfg.switch_hysteresis;
        let new_pref = match (incumbent, best_confirmed) {
            (Some(inc), Some(b)) if b != inc && value(b) > value(inc).map(|v| v * margin) => Some(b),
            (Some(inc), _) => Some(inc),
            (None, b) => b,
        };

        let k = cfg.max_parents.max(1);
        let mut table: Vec<ParentRecord> = Vec::with_capacity(k);
        if let Some(p) = new_pref {
            table.extend(ranked.iter().filter(|r| r.parent_id == p).cloned());
        }
        table.extend(ranked.iter().filter(|r| Some(r.parent_id) != new_pref).take(k - table.len()).cloned());

        let mut dao_targets: Vec<NodeId> = table
            .iter()
            .map(|r| r.parent_id)
            .filter(|id| !self.confirmed.contains(id) && !self.pending_dao.contains_key(id))
            .collect();
        // single-slot tables still court a clearly better challenger
        if let (Some(top), Some(p)) = (ranked.first(), new_pref) {
            let challenger = top.parent_id;
            if challenger != p
                && !table.iter().any(|r| r.parent_id == challenger)
                && !self.confirmed.contains(&challenger)
                && !self.pending_dao.contains_key(&challenger)
                && value(challenger) > value(p).map(|v| v * margin)
            {
                dao_targets.push(challenger);
            }
        }
        self.parent_table = table;
        for id in dao_targets {
            self.pending_dao.insert(id, 1);
            let mut dao = self.control(MessageKind::Dao, self.node_id);
            dao.arssi = self.arssi_of(id).unwrap_or(0.0);
            t.outbound.push(Outbound { dest: Destination::Unicast(id), msg: dao });
        }
        if !self.pending_dao.is_empty() && self.timers.dao_retry.is_none() {
            t.timers.push(self.arm(TimerKind::DaoRetry, now + cfg.dao_retry_s));
        }

        if new_pref != self.preferred_parent_id {
            match new_pref {
                Some(p) => t.merge(self.switch_preferred(p, now, cfg)),
                None => {
                    if self.preferred_parent_id.is_some() {
                        t.merge(self.detach(now));
                    }
                }
            }
        }
        t
    }

    fn switch_preferred(&mut self, p: NodeId, now: f64, cfg: &ProtocolConfig) -> Transition {
        let mut t = Transition::default();
        let attaching = self.preferred_parent_id.is_none();
        self.preferred_parent_id = Some(p);
        self.probe_sent_s = None;
        if !attaching {
            t.outbound.push(self.dao_to(p));
        }
        if attaching {
            self.detached_at_s = None;
            self.trickle.restart();
            self.trickle_running = true;
            t.timers.push(self.arm(TimerKind::Trickle, now + self.trickle.interval_s()));
            t.timers.push(self.arm(TimerKind::DaoRefresh, now + cfg.i_max_s()));
            if cfg.mode == Mode::Rpluwm {
                t.timers.push(self.arm(TimerKind::Linkage, now + cfg.i_max_s()));
            }
        }
        t.merge(self.adopt_rank_from_preferred(now, cfg));
        t
    }

    /// Recompute own rank from the preferred parent's advertised rank and
    /// drop table entries that would no longer sit above us.
    fn adopt_rank_from_preferred(&mut self, now: f64, cfg: &ProtocolConfig) -> Transition {
        let mut t = Transition::default();
        let Some(p) = self.preferred_parent_id else { return t };
        let Some(c) = self.candidates.get(&p).cloned() else { return t };
        let arssi = cfg.arssi_norm(self.arssi_of(p).unwrap_or(cfg.arssi_floor_db));
        let new_rank = compute_rank(c.rank, 1, self.depth_m, c.depth_m, arssi, &cfg.rank_weights, cfg.max_depth_m)
            .unwrap_or(INFINITE_RANK);
        self.hop_count = c.hop_count.saturating_add(1);
        if new_rank != self.rank {
            self.rank = new_rank;
            t.timers.extend(self.inconsistency(now));
        }
        let own = self.rank;
        let candidates = &self.candidates;
        self.parent_table
            .retain(|r| r.parent_id == p || candidates.get(&r.parent_id).is_some_and(|c| c.rank < own));
        t
    }

    fn lose_parent(&mut self, p: NodeId, now: f64, cfg: &ProtocolConfig) -> Transition {
        let mut t = Transition::default();
        self.parent_table.retain(|r| r.parent_id != p);
        self.confirmed.remove(&p);
        self.pending_dao.remove(&p);
        self.candidates.remove(&p);
        if Some(p) == self.preferred_parent_id {
            t.timers.extend(self.inconsistency(now));
            // failover only to nodes heard after the loss or ranked above us
            let old_rank = self.rank;
            self.preferred_parent_id = None;
            self.rank_before_detach = old_rank;
            self.detached_at_s = Some(now);
            t.merge(self.reselect(now, cfg));
            if self.preferred_parent_id.is_none() {
                t.merge(self.detach_announce(old_rank, now));
            }
        } else {
            t.merge(self.reselect(now, cfg));
        }
        t
    }

    fn detach(&mut self, now: f64) -> Transition {
        let old_rank = self.rank;
        self.preferred_parent_id = None;
        self.rank_before_detach = old_rank;
        self.detached_at_s = Some(now);
        self.detach_announce(old_rank, now)
    }

    /// Poison our sub-DODAG and ask neighbours for fresh advertisements.
    fn detach_announce(&mut self, old_rank: f64, now: f64) -> Transition {
        let mut t = Transition::default();
        self.rank = INFINITE_RANK;
        self.hop_count = u32::MAX;
        self.rank_before_detach = old_rank;
        if self.detached_at_s.is_none() {
            self.detached_at_s = Some(now);
        }
        self.trickle_running = false;
        self.timers.trickle = None;
        self.timers.dao_refresh = None;
        self.timers.response = None;
        let poison = self.dio(MessageKind::Dio);
        self.last_poison_s = Some(now);
        t.outbound.push(broadcast(poison));
        t.outbound.push(broadcast(self.control(MessageKind::Dis, self.node_id)));
        t
    }

    fn inconsistency(&mut self, now: f64) -> Vec<TimerUpdate> {
        if !self.trickle_running {
            return Vec::new();
        }
        let out = self.trickle.step(TrickleEvent::Inconsistency);
        if out.reset {
            vec![self.arm(TimerKind::Trickle, now + self.trickle.interval_s())]
        } else {
            Vec::new()
        }
    }

    // -----------------------------------------------------------------------
    // Message construction
    // -----------------------------------------------------------------------

    fn arm(&mut self, timer: TimerKind, at_s: f64) -> TimerUpdate {
        *self.timers.slot(timer) = Some(at_s);
        TimerUpdate { timer, at_s }
    }

    fn next_sequence(&mut self, kind: MessageKind) -> u16 {
        let slot = &mut self.next_seq[kind.index()];
        *slot = slot.wrapping_add(1);
        *slot
    }

    fn control(&mut self, kind: MessageKind, target: NodeId) -> ControlMessage {
        let root = self.dodag_root_list.first().copied();
        ControlMessage {
            kind,
            sender_id: self.node_id,
            rank: self.rank,
            depth_m: self.depth_m,
            arssi: 0.0,
            dodag_root_id: root.map(|r| r.root_id).unwrap_or(self.node_id),
            root_position: root.map(|r| r.position).unwrap_or(self.position),
            sequence: self.next_sequence(kind),
            size_bytes: kind.size_bytes(),
            hop_count: self.hop_count,
            residual_energy_j: self.residual_energy_j,
            target_id: target,
        }
    }

    fn dao_to(&mut self, parent: NodeId) -> Outbound {
        let mut dao = self.control(MessageKind::Dao, self.node_id);
        dao.arssi = self.arssi_of(parent).unwrap_or(0.0);
        Outbound { dest: Destination::Unicast(parent), msg: dao }
    }

    fn dio(&mut self, kind: MessageKind) -> ControlMessage {
        let mut m = self.control(kind, self.node_id);
        m.arssi = self.preferred_parent_id.and_then(|p| self.arssi_of(p)).unwrap_or(0.0);
        m
    }

}

fn broadcast(msg: ControlMessage) -> Outbound {
    Outbound { dest: Destination::Broadcast, msg }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    fn rx() -> RxInfo {
        RxInfo { snr_db: 50.0, delay_s: 0.05 }
    }

    fn advertise(from: &mut NodeState) -> ControlMessage {
        let mut t = Transition::default();
        t.outbound.push(broadcast(from.dio(MessageKind::Dio)));
        t.outbound.pop().unwrap().msg
    }

    fn kinds(t: &Transition) -> Vec<MessageKind> {
        t.outbound.iter().map(|o| o.msg.kind).collect()
    }

    fn join(child: &mut NodeState, parent: &mut NodeState, now: f64, cfg: &ProtocolConfig) {
        let dio = advertise(parent);
        let t = child.process_control_message(&dio, rx(), now, cfg, &mut rng());
        let dao = t.outbound.iter().find(|o| o.msg.kind == MessageKind::Dao).expect("DAO").msg.clone();
        let t = parent.process_control_message(&dao, rx(), now + 0.1, cfg, &mut rng());
        let ack = t.outbound.iter().find(|o| o.msg.kind == MessageKind::DaoAck).expect("ack").msg.clone();
        child.process_control_message(&ack, rx(), now + 0.2, cfg, &mut rng());
        assert_eq!(child.preferred_parent_id, Some(parent.node_id));
    }

    #[test]
    fn orphan_joins_root() {
        let cfg = ProtocolConfig::default();
        let mut root = NodeState::new_root(0, [500.0, 500.0, 0.0], 50_000.0, &cfg);
        let mut n = NodeState::new_sensor(1, [500.0, 500.0, 80.0], 50.0, false, &cfg);
        let start = root.start(0.0, &cfg, &mut rng());
        assert_eq!(kinds(&start), vec![MessageKind::Dio]);
        let dio = start.outbound[0].msg.clone();
        assert_eq!(dio.rank, 0.0);
        let t = n.process_control_message(&dio, rx(), 0.1, &cfg, &mut rng());
        assert_eq!(n.parent_table.len(), 1);
        assert_eq!(n.parent_table[0].parent_id, 0);
        assert_eq!(kinds(&t), vec![MessageKind::Dao]);
        assert_eq!(t.outbound[0].dest, Destination::Unicast(0));
        assert!(n.preferred_parent_id.is_none(), "membership waits for the ack");
    }

    #[test]
    fn root_acks_dao() {
        let cfg = ProtocolConfig::default();
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        let mut n = NodeState::new_sensor(1, [0.0, 0.0, 50.0], 50.0, false, &cfg);
        join(&mut n, &mut root, 0.0, &cfg);
        assert!(n.rank > 0.0);
        assert!(n.trickle_running);
        assert!(root.is_descendant(1, 1.0));
        n.check_invariants(&cfg).unwrap();
    }

    #[test]
    fn dao_ack_needs_link_quality() {
        let cfg = ProtocolConfig::default();
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        let mut n = NodeState::new_sensor(1, [0.0, 0.0, 50.0], 50.0, false, &cfg);
        let dio = advertise(&mut root);
        let t = n.process_control_message(&dio, rx(), 0.1, &cfg, &mut rng());
        let dao = t.outbound[0].msg.clone();
        let weak = RxInfo { snr_db: 3.0, delay_s: 0.05 };
        let t = root.process_control_message(&dao, weak, 0.2, &cfg, &mut rng());
        assert!(!kinds(&t).contains(&MessageKind::DaoAck));
    }

    #[test]
    fn descendant_dio_is_not_a_parent() {
        let cfg = ProtocolConfig::default();
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        let mut a = NodeState::new_sensor(1, [0.0, 0.0, 50.0], 50.0, false, &cfg);
        let mut b = NodeState::new_sensor(2, [0.0, 0.0, 100.0], 50.0, false, &cfg);
        join(&mut a, &mut root, 0.0, &cfg);
        join(&mut b, &mut a, 1.0, &cfg);
        let before = a.preferred_parent_id;
        let dio = advertise(&mut b);
        let t = a.process_control_message(&dio, rx(), 2.0, &cfg, &mut rng());
        assert_eq!(a.preferred_parent_id, before);
        assert!(!a.parent_table.iter().any(|r| r.parent_id == 2));
        assert!(!kinds(&t).contains(&MessageKind::Dao));
    }

    #[test]
    fn stale_sequence_ignored() {
        let cfg = ProtocolConfig::default();
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        let mut n = NodeState::new_sensor(1, [0.0, 0.0, 50.0], 50.0, false, &cfg);
        let dio = advertise(&mut root);
        n.process_control_message(&dio, rx(), 0.1, &cfg, &mut rng());
        let snapshot = n.clone();
        let t = n.process_control_message(&dio, rx(), 0.2, &cfg, &mut rng());
        assert!(t.is_empty());
        assert_eq!(n, snapshot);
    }

    #[test]
    fn dis_arms_response_and_dio_follows() {
        let cfg = ProtocolConfig::default();
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        root.start(0.0, &cfg, &mut rng());
        let mut orphan = NodeState::new_sensor(5, [0.0, 0.0, 10.0], 50.0, false, &cfg);
        let dis = orphan.control(MessageKind::Dis, 5);
        let t = root.process_control_message(&dis, rx(), 3.0, &cfg, &mut rng());
        let resp = t.timers.iter().find(|u| u.timer == TimerKind::Response).unwrap();
        assert!(resp.at_s >= 3.0 && resp.at_s <= 4.0);
        let out = root.timer_expiry(TimerKind::Response, resp.at_s, &cfg, &mut rng());
        assert_eq!(kinds(&out), vec![MessageKind::Dio]);
    }

    #[test]
    fn stale_timer_is_noop() {
        let cfg = ProtocolConfig::default();
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        root.start(0.0, &cfg, &mut rng());
        let t = root.timer_expiry(TimerKind::Response, 1.0, &cfg, &mut rng());
        assert!(t.is_empty());
        let t = root.timer_expiry(TimerKind::Trickle, 1.0, &cfg, &mut rng());
        assert!(t.is_empty());
    }

    #[test]
    fn linkage_expiry_starts_discovery() {
        let cfg = ProtocolConfig { mode: Mode::Rpluwm, ..ProtocolConfig::default() };
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        let mut n = NodeState::new_sensor(1, [0.0, 0.0, 50.0], 50.0, true, &cfg);
        join(&mut n, &mut root, 0.0, &cfg);
        let at = n.timers.linkage.unwrap();
        let t = n.timer_expiry(TimerKind::Linkage, at, &cfg, &mut rng());
        assert!(kinds(&t).contains(&MessageKind::Dis));
        assert!(n.preferred_parent_id.is_none());
    }

    #[test]
    fn parent_traffic_resets_linkage() {
        let cfg = ProtocolConfig { mode: Mode::Rpluwm, ..ProtocolConfig::default() };
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        let mut n = NodeState::new_sensor(1, [0.0, 0.0, 50.0], 50.0, true, &cfg);
        join(&mut n, &mut root, 0.0, &cfg);
        let first = n.timers.linkage.unwrap();
        let dio = advertise(&mut root);
        n.process_control_message(&dio, rx(), 30.0, &cfg, &mut rng());
        let t = n.timer_expiry(TimerKind::Linkage, first, &cfg, &mut rng());
        assert!(t.is_empty());
        assert_eq!(n.preferred_parent_id, Some(0));
        assert_eq!(n.timers.linkage, Some(30.0 + cfg.i_max_s()));
    }

    #[test]
    fn mobility_expiry_quiet_when_link_good() {
        let cfg = ProtocolConfig { mode: Mode::Rpluwm, ..ProtocolConfig::default() };
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        let mut n = NodeState::new_sensor(1, [0.0, 0.0, 50.0], 50.0, true, &cfg);
        n.start(0.0, &cfg, &mut rng());
        join(&mut n, &mut root, 0.0, &cfg);
        let at = n.timers.mobility.unwrap();
        let t = n.timer_expiry(TimerKind::Mobility, at, &cfg, &mut rng());
        assert!(t.outbound.is_empty());
        assert_eq!(t.timers.len(), 1);
        assert_eq!(t.timers[0].timer, TimerKind::Mobility);
    }

    #[test]
    fn mobility_expiry_explores_when_weak() {
        let cfg = ProtocolConfig { mode: Mode::Rpluwm, ..ProtocolConfig::default() };
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        let mut n = NodeState::new_sensor(1, [0.0, 0.0, 50.0], 50.0, true, &cfg);
        n.start(0.0, &cfg, &mut rng());
        join(&mut n, &mut root, 0.0, &cfg);
        for _ in 0..20 {
            n.update_arssi(0, -5.0, cfg.arssi_beta);
        }
        let at = n.timers.mobility.unwrap();
        let t = n.timer_expiry(TimerKind::Mobility, at, &cfg, &mut rng());
        assert!(kinds(&t).contains(&MessageKind::Dis));
    }

    #[test]
    fn silent_parent_probed_then_dropped() {
        let cfg = ProtocolConfig { mode: Mode::Rpluwm, ..ProtocolConfig::default() };
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        let mut n = NodeState::new_sensor(1, [0.0, 0.0, 50.0], 50.0, true, &cfg);
        n.start(0.0, &cfg, &mut rng());
        join(&mut n, &mut root, 0.0, &cfg);
        let t1 = n.timers.mobility.unwrap();
        let mut t = n.timer_expiry(TimerKind::Mobility, t1, &cfg, &mut rng());
        let mut at = n.timers.mobility.unwrap();
        // keep expiring without ever hearing the parent
        while !kinds(&t).contains(&MessageKind::Ns) {
            t = n.timer_expiry(TimerKind::Mobility, at, &cfg, &mut rng());
            at = n.timers.mobility.unwrap();
        }
        assert_eq!(t.outbound[0].dest, Destination::Unicast(0));
        let t = n.timer_expiry(TimerKind::Mobility, at, &cfg, &mut rng());
        assert!(kinds(&t).contains(&MessageKind::Dis));
        assert!(n.preferred_parent_id.is_none());
    }

    #[test]
    fn neighbor_discovery_replies() {
        let cfg = ProtocolConfig { mode: Mode::Rpluwm, ..ProtocolConfig::default() };
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        let mut m = NodeState::new_sensor(7, [10.0, 0.0, 40.0], 50.0, true, &cfg);
        let ns = m.control(MessageKind::Ns, 0);
        let t = root.neighbor_discovery_step(&ns, rx(), 1.0, &cfg, &mut rng());
        assert_eq!(kinds(&t), vec![MessageKind::Na]);
        assert_eq!(t.outbound[0].dest, Destination::Unicast(7));

        let rs = m.control(MessageKind::Rs, 7);
        let t = root.neighbor_discovery_step(&rs, rx(), 2.0, &cfg, &mut rng());
        assert_eq!(kinds(&t), vec![MessageKind::Ra]);
        let ra = t.outbound[0].msg.clone();
        let t = m.neighbor_discovery_step(&ra, rx(), 2.1, &cfg, &mut rng());
        assert!(m.candidates.contains_key(&0));
        assert_eq!(kinds(&t), vec![MessageKind::Dao]);
        assert_eq!(m.dodag_root_list.len(), 1);
    }

    #[test]
    fn na_from_unknown_adds_neighbor_only() {
        let cfg = ProtocolConfig { mode: Mode::Rpluwm, ..ProtocolConfig::default() };
        let mut a = NodeState::new_sensor(1, [0.0; 3], 50.0, false, &cfg);
        let mut b = NodeState::new_sensor(2, [0.0; 3], 50.0, false, &cfg);
        let na = b.control(MessageKind::Na, 1);
        let t = a.neighbor_discovery_step(&na, rx(), 1.0, &cfg, &mut rng());
        assert!(t.is_empty());
        assert!(a.neighbors_last_heard.contains_key(&2));
        assert!(a.parent_table.is_empty());
    }

    #[test]
    fn static_mode_ignores_nd() {
        let cfg = ProtocolConfig::default();
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        let mut m = NodeState::new_sensor(7, [0.0; 3], 50.0, false, &cfg);
        let ns = m.control(MessageKind::Ns, 0);
        let snapshot = root.clone();
        assert!(root.neighbor_discovery_step(&ns, rx(), 1.0, &cfg, &mut rng()).is_empty());
        assert_eq!(root, snapshot);
    }

    #[test]
    fn arssi_smoothing() {
        let cfg = ProtocolConfig::default();
        let mut n = NodeState::new_sensor(1, [0.0; 3], 50.0, false, &cfg);
        n.update_arssi(4, -60.0, 0.3);
        assert_eq!(n.arssi_of(4), Some(-60.0));
        n.update_arssi(4, -60.0, 0.3);
        assert_eq!(n.arssi_of(4), Some(-60.0));
        n.update_arssi(4, -40.0, 0.3);
        assert!((n.arssi_of(4).unwrap() + 54.0).abs() < 1e-12);
    }

    #[test]
    fn failover_uses_alternate_parent() {
        let cfg = ProtocolConfig::default();
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        let mut a = NodeState::new_sensor(1, [0.0, 0.0, 60.0], 50.0, false, &cfg);
        let mut b = NodeState::new_sensor(2, [10.0, 0.0, 60.0], 50.0, false, &cfg);
        let mut c = NodeState::new_sensor(3, [5.0, 0.0, 120.0], 50.0, false, &cfg);
        join(&mut a, &mut root, 0.0, &cfg);
        join(&mut b, &mut root, 0.0, &cfg);
        join(&mut c, &mut a, 1.0, &cfg);
        // c learns about b and registers with it as well
        let dio_b = advertise(&mut b);
        let t = c.process_control_message(&dio_b, rx(), 2.0, &cfg, &mut rng());
        let dao = t.outbound.iter().find(|o| o.msg.kind == MessageKind::Dao).unwrap().msg.clone();
        let t = b.process_control_message(&dao, rx(), 2.1, &cfg, &mut rng());
        let ack = t.outbound.iter().find(|o| o.msg.kind == MessageKind::DaoAck).unwrap().msg.clone();
        c.process_control_message(&ack, rx(), 2.2, &cfg, &mut rng());
        assert_eq!(c.parent_table.len(), 2);
        let pref = c.preferred_parent_id.unwrap();
        let other = if pref == 1 { 2 } else { 1 };
        let mut t = Transition::default();
        for _ in 0..cfg.link_failure_limit {
            t = c.link_result(pref, false, 3.0, &cfg);
        }
        assert_eq!(c.preferred_parent_id, Some(other));
        assert!(!kinds(&t).contains(&MessageKind::Dis));
        c.check_invariants(&cfg).unwrap();
    }

    #[test]
    fn single_parent_detaches_on_loss() {
        let cfg = ProtocolConfig { max_parents: 1, ..ProtocolConfig::default() };
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        let mut a = NodeState::new_sensor(1, [0.0, 0.0, 60.0], 50.0, false, &cfg);
        join(&mut a, &mut root, 0.0, &cfg);
        let mut t = Transition::default();
        for _ in 0..cfg.link_failure_limit {
            t = a.link_result(0, false, 3.0, &cfg);
        }
        assert!(a.preferred_parent_id.is_none());
        assert_eq!(a.rank, INFINITE_RANK);
        let k = kinds(&t);
        assert!(k.contains(&MessageKind::Dis));
        let poison = t.outbound.iter().find(|o| o.msg.kind == MessageKind::Dio).unwrap();
        assert!(poison.msg.rank.is_infinite());
    }

    #[test]
    fn poison_from_parent_cascades() {
        let cfg = ProtocolConfig { max_parents: 1, ..ProtocolConfig::default() };
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        let mut a = NodeState::new_sensor(1, [0.0, 0.0, 60.0], 50.0, false, &cfg);
        let mut b = NodeState::new_sensor(2, [0.0, 0.0, 120.0], 50.0, false, &cfg);
        join(&mut a, &mut root, 0.0, &cfg);
        join(&mut b, &mut a, 1.0, &cfg);
        let mut t = Transition::default();
        for _ in 0..cfg.link_failure_limit {
            t = a.link_result(0, false, 3.0, &cfg);
        }
        let poison = t.outbound.iter().find(|o| o.msg.kind == MessageKind::Dio).unwrap().msg.clone();
        b.process_control_message(&poison, rx(), 3.1, &cfg, &mut rng());
        assert!(b.preferred_parent_id.is_none());
        // once detached, a's old child is still remembered as a descendant
        let dio_b = {
            b.rank = 2.0;
            let m = advertise(&mut b);
            b.rank = INFINITE_RANK;
            m
        };
        a.process_control_message(&dio_b, rx(), 3.5, &cfg, &mut rng());
        assert!(a.parent_table.is_empty());
    }

    #[test]
    fn parent_table_capped() {
        let cfg = ProtocolConfig::default();
        let mut n = NodeState::new_sensor(99, [0.0, 0.0, 300.0], 50.0, false, &cfg);
        for id in 1..=6 {
            let mut p = NodeState::new_sensor(id, [0.0, 0.0, 100.0], 50.0, false, &cfg);
            p.rank = 1.0 + id as f64 * 0.01;
            p.hop_count = 1;
            p.dodag_root_list.push(RootEntry { root_id: 0, position: [0.0; 3] });
            let dio = advertise(&mut p);
            n.process_control_message(&dio, RxInfo { snr_db: 40.0 + id as f64, delay_s: 0.1 }, 1.0, &cfg, &mut rng());
            assert!(n.parent_table.len() <= 4);
        }
        assert_eq!(n.parent_table.len(), 4);
    }

    #[test]
    fn transitions_are_deterministic() {
        let cfg = ProtocolConfig { mode: Mode::Rpluwm, ..ProtocolConfig::default() };
        let mut root = NodeState::new_root(0, [0.0; 3], 50_000.0, &cfg);
        let mut n = NodeState::new_sensor(1, [0.0, 0.0, 50.0], 50.0, true, &cfg);
        join(&mut n, &mut root, 0.0, &cfg);
        let dis = n.control(MessageKind::Dis, 1);
        let mut r1 = root.clone();
        let mut r2 = root.clone();
        let a = r1.process_control_message(&dis, rx(), 9.0, &cfg, &mut rng());
        let b = r2.process_control_message(&dis, rx(), 9.0, &cfg, &mut rng());
        assert_eq!(a, b);
        assert_eq!(r1, r2);
    }
}
