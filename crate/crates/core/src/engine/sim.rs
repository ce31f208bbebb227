use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use super::bbm92::{KeyAccumulator, KeySession, SessionParams, SessionStatus, Sifted};
use super::link::{attempts_until_success, success_probability};
use crate::adversary::{Adversary, AttackKind, Params, Target};
use crate::events::{Event, EventKind, EventLog};
use crate::ids::{ActionId, AttackerId, ConnId, LinkId, NodeId, PairId};
use crate::monitor::{
    detection_latency, Accusation, CIALedger, CertAccumulator, CertReport, CertScope, DetectionRecord,
    ReputationLedger, SecretSampler, TestChoice, Thresholds, Verdict,
};
use crate::network::{partition_report, shortest_path, RouteOptions, Topology};
use crate::rng::{self, SimRng};
use crate::scenario::{Application, Scenario};
use crate::state::{
    apply_attack_channel, measure_half, measure_pair, measure_qubit, oracle_purify, oracle_swap, purify, swap_werner,
    AttackChannel, AttackTag, BasisLabel, BellIndex, Disposition, Half, Mat2, MeasurementBasis, PairOrigin, PairState,
    PairStore, Pauli, StoreCounters,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnState {
    Pending,
    SettingUp,
    Running,
    Done,
    Aborted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    PathSetupTimeout,
    NoPath,
    ClassicalDisconnected,
    QberAbort,
}

/// Final state of one connection.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConnectionReport {
    pub id: ConnId,
    pub demand: Option<String>,
    /// Set for requests an attacker injected.
    pub injected_by: Option<ActionId>,
    pub src: String,
    pub dst: String,
    pub application: Application,
    pub state: ConnState,
    pub abort_reason: Option<AbortReason>,
    pub path: Vec<String>,
    pub reroutes: u32,
    pub start_s: f64,
    pub running_at_s: Option<f64>,
    pub finished_at_s: Option<f64>,
    pub target_pairs: u64,
    pub delivered: u64,
    pub sacrificed: u64,
    pub link_attempts: u64,
    pub throughput_hz: f64,
    pub mean_fidelity: Option<f64>,
    pub mean_latency_s: Option<f64>,
    /// Endpoint pairs of delivered records, `a|b` by node name.
    pub delivered_endpoints: BTreeMap<String, u64>,
    pub verdict: Verdict,
}

/// Ledger deltas attributed to one attack action.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AttackEffects {
    pub action: ActionId,
    pub attacker: String,
    pub kind: String,
    pub represents: String,
    pub effects: u64,
    pub leaked_pairs: u64,
    pub bad_delivered: u64,
    pub destroyed_pairs: u64,
    pub leaked_key_bits: u64,
    pub corrupted_key_bits: u64,
    pub messages_observed: u64,
    pub messages_dropped: u64,
    pub messages_modified: u64,
    pub messages_delayed: u64,
    pub wrong_frames: u64,
    pub first_effect_s: Option<f64>,
    pub detected_at_s: Option<f64>,
    pub detection_latency_s: Option<f64>,
}

/// Pair-record conservation summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Accounting {
    pub counters: StoreCounters,
    pub created_total: u64,
    pub retired_total: u64,
    pub live_at_end: u64,
    pub identity_holds: bool,
    pub verification_probes: u64,
}

/// Everything a run produces.
#[derive(Debug)]
pub struct RunOutput {
    pub seed: u64,
    pub end_time_s: f64,
    pub log: EventLog,
    pub ledger: CIALedger,
    pub connections: Vec<ConnectionReport>,
    pub certification: Vec<CertReport>,
    pub reputation: ReputationLedger,
    pub key_sessions: Vec<KeySession>,
    pub attack_effects: Vec<AttackEffects>,
    pub accounting: Accounting,
}

// ------------------------------------------------------------------ internals

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Side {
    Left,
    Right,
}

impl Side {
    fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    fn half(self) -> Half {
        match self {
            Side::Left => Half::A,
            Side::Right => Half::B,
        }
    }
}

/// Where one half of a pair sits: node position on a connection's path.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Loc {
    conn: ConnId,
    pos: usize,
    /// Withheld by a man-in-the-middle node.
    held: Option<AttackTag>,
    /// Moved out of the link-facing memory into buffer memory.
    buffered: bool,
}

impl Loc {
    fn new(conn: ConnId, pos: usize) -> Self {
        Loc { conn, pos, held: None, buffered: false }
    }
}

#[derive(Clone, Copy, Debug)]
struct Deferred {
    channel: AttackChannel,
    tag: AttackTag,
    /// The attacker leaves alone pairs it knows will be tested.
    skip_if_sampled: bool,
}

#[derive(Clone, Debug)]
struct Meta {
    left: Loc,
    right: Loc,
    pending_frames: u32,
    origin_s: f64,
    deferred: Vec<Deferred>,
    level: u32,
    /// Attacker that lost or delayed a correction this pair waits for.
    frame_interference: Option<AttackTag>,
}

impl Meta {
    fn loc(&self, side: Side) -> Loc {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
        }
    }
}

struct Residual {
    rho: Mat2,
    loc: Loc,
}

#[derive(Debug)]
enum Ev {
    ConnStart(ConnId),
    SetupArrive { conn: ConnId, epoch: u32, hop: usize },
    AckArrive { conn: ConnId, epoch: u32 },
    SetupTimeout { conn: ConnId, epoch: u32 },
    LinkSuccess { conn: ConnId, epoch: u32, pos: usize, attempts: u64 },
    FrameArrive { lineage: PairId, node: NodeId, error: Option<(Pauli, AttackTag)>, interference: Option<AttackTag> },
    FrameTimeout(PairId),
    PurifyDone(PairId),
    AttackStart(ActionId),
    VerifyRound(NodeId),
}

struct Scheduled {
    time: f64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

enum Delivery {
    Arrives { at: f64, tampered: Option<AttackTag>, interference: Option<AttackTag> },
    Lost(Option<AttackTag>),
}

struct Conn {
    id: ConnId,
    demand: Option<String>,
    injected_by: Option<ActionId>,
    src: NodeId,
    dst: NodeId,
    app: Application,
    target_pairs: u64,
    key_length: u64,
    sifted_target: u64,
    check_fraction: f64,
    purify_target: Option<f64>,
    purify_budget: u32,
    start_s: f64,
    pinned: Option<Vec<NodeId>>,

    state: ConnState,
    abort: Option<AbortReason>,
    path: Vec<NodeId>,
    links: Vec<LinkId>,
    epoch: u32,
    timeout_s: f64,
    // Per link position 1..=k (index 0 unused).
    used_a: Vec<u32>,
    used_b: Vec<u32>,
    slots: Vec<u32>,
    inflight: Vec<bool>,
    // Per node position: pairs whose right (resp. left) half waits there.
    left_ready: Vec<VecDeque<PairId>>,
    right_ready: Vec<VecDeque<PairId>>,
    src_q: VecDeque<PairId>,
    dst_q: VecDeque<PairId>,
    pool: Vec<VecDeque<PairId>>,

    running_at: Option<f64>,
    finished_at: Option<f64>,
    delivered: u64,
    sacrificed: u64,
    attempts: u64,
    reroutes: u32,
    fidelity_sum: f64,
    latency_sum: f64,
    endpoints: BTreeMap<String, u64>,
    sampler: SecretSampler,
    cert: CertAccumulator,
    verdict: Verdict,
    keys: KeyAccumulator,
    session: Option<KeySession>,
}

impl Conn {
    fn last(&self) -> usize {
        self.path.len() - 1
    }

    fn is_live(&self) -> bool {
        matches!(self.state, ConnState::SettingUp | ConnState::Running)
    }
}

struct LinkCert {
    sampler: SecretSampler,
    acc: CertAccumulator,
    verdict: Verdict,
}

fn stream_mut<'r>(
    rngs: &'r mut BTreeMap<(&'static str, u64), SimRng>,
    seed: u64,
    domain: &'static str,
    index: u64,
) -> &'r mut SimRng {
    rngs.entry((domain, index)).or_insert_with(|| rng::stream(seed, domain, index))
}

fn depolarize_werner(f: f64, q: f64) -> f64 {
    0.25 + (1.0 - q) * (f - 0.25)
}

/// Apply an attack channel to half B, staying on the Werner fast path when
/// the channel preserves Werner form.
fn apply_channel(state: &PairState, ch: AttackChannel) -> PairState {
    match (state, ch) {
        (PairState::Werner(f), AttackChannel::Depolarize(q)) => PairState::Werner(depolarize_werner(*f, q)),
        _ => PairState::Exact(apply_attack_channel(&state.to_exact(), ch).expect("attack channels are CPTP")),
    }
}

fn random_basis<R: Rng + ?Sized>(rng: &mut R) -> BasisLabel {
    if rng.random::<bool>() {
        BasisLabel::X
    } else {
        BasisLabel::Z
    }
}

pub(crate) struct Simulator<'a> {
    sc: &'a Scenario,
    topo: &'a Topology,
    adv: &'a Adversary,
    seed: u64,
    th: Thresholds,
    now: f64,
    queue: BinaryHeap<Scheduled>,
    next_seq: u64,
    pending_attack_starts: usize,
    log: EventLog,
    store: PairStore,
    meta: BTreeMap<PairId, Meta>,
    successor: HashMap<PairId, PairId>,
    residual: HashMap<(PairId, Side), Residual>,
    conns: Vec<Conn>,
    down_nodes: BTreeSet<NodeId>,
    down_links: BTreeSet<LinkId>,
    ledger: CIALedger,
    reputation: ReputationLedger,
    link_cert: BTreeMap<LinkId, LinkCert>,
    verify_reports: BTreeMap<(NodeId, LinkId), CertReport>,
    verification_probes: u64,
    rngs: BTreeMap<(&'static str, u64), SimRng>,
    effects: BTreeMap<ActionId, AttackEffects>,
    keys_stolen_at: BTreeMap<AttackerId, f64>,
}

impl<'a> Simulator<'a> {
    pub(crate) fn new(sc: &'a Scenario, seed: u64) -> Self {
        let p = &sc.protocol;
        let effects = sc
            .adversary
            .actions
            .iter()
            .map(|a| {
                let e = AttackEffects {
                    action: a.id,
                    attacker: sc.adversary.script(a.attacker).name.clone(),
                    kind: a.kind.name().to_string(),
                    represents: a.kind.represents().to_string(),
                    ..Default::default()
                };
                (a.id, e)
            })
            .collect();
        let mut sim = Simulator {
            sc,
            topo: &sc.topology,
            adv: &sc.adversary,
            seed,
            th: p.thresholds(),
            now: 0.0,
            queue: BinaryHeap::new(),
            next_seq: 0,
            pending_attack_starts: 0,
            log: EventLog::default(),
            store: PairStore::new(),
            meta: BTreeMap::new(),
            successor: HashMap::new(),
            residual: HashMap::new(),
            conns: Vec::new(),
            down_nodes: BTreeSet::new(),
            down_links: BTreeSet::new(),
            ledger: CIALedger::default(),
            reputation: ReputationLedger::new(p.reputation_policy, p.reputation_k),
            link_cert: BTreeMap::new(),
            verify_reports: BTreeMap::new(),
            verification_probes: 0,
            rngs: BTreeMap::new(),
            effects,
            keys_stolen_at: BTreeMap::new(),
        };
        for d in &sc.demands {
            let id = ConnId(sim.conns.len() as u32);
            let conn = sim.new_conn(
                id,
                d.src,
                d.dst,
                d.application,
                d.target_pairs,
                d.sacrifice_fraction,
                d.start_s,
            );
            sim.conns.push(Conn {
                demand: Some(d.id.clone()),
                key_length: d.key_length,
                sifted_target: d.sifted_target(),
                check_fraction: d.check_fraction,
                purify_target: d.purify_target,
                purify_budget: d.purify_budget,
                pinned: d.path.clone(),
                ..conn
            });
            sim.schedule(d.start_s, Ev::ConnStart(id));
        }
        for a in &sc.adversary.actions {
            sim.pending_attack_starts += 1;
            sim.schedule(a.window.start_s, Ev::AttackStart(a.id));
        }
        if let Some(mean) = p.verify_interval_mean_s {
            for n in sc.topology.nodes().iter().filter(|n| !n.kind.is_inode()) {
                let t = sim.exp_delay("verify-timer", n.id.0 as u64, mean);
                sim.schedule(t, Ev::VerifyRound(n.id));
            }
        }
        sim
    }

    #[allow(clippy::too_many_arguments)]
    fn new_conn(
        &self,
        id: ConnId,
        src: NodeId,
        dst: NodeId,
        app: Application,
        target_pairs: u64,
        sacrifice_fraction: f64,
        start_s: f64,
    ) -> Conn {
        let p = &self.sc.protocol;
        Conn {
            id,
            demand: None,
            injected_by: None,
            src,
            dst,
            app,
            target_pairs,
            key_length: 0,
            sifted_target: 0,
            check_fraction: 0.0,
            purify_target: None,
            purify_budget: 0,
            start_s,
            pinned: None,
            state: ConnState::Pending,
            abort: None,
            path: Vec::new(),
            links: Vec::new(),
            epoch: 0,
            timeout_s: 0.0,
            used_a: Vec::new(),
            used_b: Vec::new(),
            slots: Vec::new(),
            inflight: Vec::new(),
            left_ready: Vec::new(),
            right_ready: Vec::new(),
            src_q: VecDeque::new(),
            dst_q: VecDeque::new(),
            pool: Vec::new(),
            running_at: None,
            finished_at: None,
            delivered: 0,
            sacrificed: 0,
            attempts: 0,
            reroutes: 0,
            fidelity_sum: 0.0,
            latency_sum: 0.0,
            endpoints: BTreeMap::new(),
            sampler: SecretSampler::new(self.seed, "e2e", id.0 as u64, sacrifice_fraction, p.chsh_fraction),
            cert: CertAccumulator::default(),
            verdict: Verdict::Inconclusive,
            keys: KeyAccumulator::default(),
            session: None,
        }
    }

    fn exp_delay(&mut self, domain: &'static str, index: u64, mean: f64) -> f64 {
        let r = stream_mut(&mut self.rngs, self.seed, domain, index);
        Exp::new(1.0 / mean).expect("positive mean").sample(r)
    }

    fn schedule(&mut self, time: f64, ev: Ev) {
        self.queue.push(Scheduled { time, seq: self.next_seq, ev });
        self.next_seq += 1;
    }

    fn emit(&mut self, e: Event) {
        self.log.push(e);
    }

    fn effect(&mut self, tag: AttackTag) -> &mut AttackEffects {
        self.effects.get_mut(&tag.action).expect("every action has an effects row")
    }

    fn attack_event(&mut self, tag: AttackTag, e: Event) {
        self.effect(tag).effects += 1;
        self.emit(e.action(tag.action));
    }

    fn attacker_rng(&mut self, attacker: AttackerId) -> &mut SimRng {
        stream_mut(&mut self.rngs, self.seed, "attacker", attacker.0 as u64)
    }

    fn holds_keys(&self, attacker: AttackerId) -> bool {
        self.adv.knowledge(attacker).holds_auth_keys || self.keys_stolen_at.get(&attacker).is_some_and(|t| *t <= self.now)
    }

    fn node_at(&self, loc: Loc) -> NodeId {
        self.conns[loc.conn.index()].path[loc.pos]
    }

    fn is_terminal(&self, loc: Loc) -> bool {
        loc.held.is_some() || loc.pos == 0 || loc.pos == self.conns[loc.conn.index()].last()
    }

    // ----------------------------------------------------------- main loop

    pub(crate) fn run(mut self) -> RunOutput {
        let horizon = self.sc.protocol.horizon_s;
        let mut end = horizon;
        while let Some(s) = self.queue.pop() {
            if s.time > horizon {
                break;
            }
            self.now = s.time;
            self.handle(s.ev);
            let idle = self.conns.iter().all(|c| matches!(c.state, ConnState::Done | ConnState::Aborted));
            if idle && self.pending_attack_starts == 0 {
                end = self.now;
                break;
            }
        }
        self.now = end;
        self.finish(end)
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::ConnStart(c) => {
                let conn = &mut self.conns[c.index()];
                conn.state = ConnState::SettingUp;
                self.begin_setup(c);
            }
            Ev::SetupArrive { conn, epoch, hop } => {
                if self.current(conn, epoch, ConnState::SettingUp) {
                    let last = self.conns[conn.index()].last();
                    if hop == last {
                        self.send_ack(conn);
                    } else {
                        self.send_setup(conn, hop);
                    }
                }
            }
            Ev::AckArrive { conn, epoch } => {
                if self.current(conn, epoch, ConnState::SettingUp) {
                    self.start_running(conn);
                }
            }
            Ev::SetupTimeout { conn, epoch } => {
                if self.current(conn, epoch, ConnState::SettingUp) {
                    self.abort(conn, AbortReason::PathSetupTimeout);
                }
            }
            Ev::LinkSuccess { conn, epoch, pos, attempts } => self.link_success(conn, epoch, pos, attempts),
            Ev::FrameArrive { lineage, node, error, interference } => {
                self.frame_arrive(lineage, node, error, interference)
            }
            Ev::FrameTimeout(p) => self.frame_timeout(p),
            Ev::PurifyDone(p) => {
                if self.store.is_live(p) {
                    self.check_deliverable(p);
                }
            }
            Ev::AttackStart(a) => {
                self.pending_attack_starts -= 1;
                self.attack_start(a);
            }
            Ev::VerifyRound(n) => self.verify_round(n),
        }
    }

    fn current(&self, c: ConnId, epoch: u32, state: ConnState) -> bool {
        let conn = &self.conns[c.index()];
        conn.epoch == epoch && conn.state == state
    }

    // ---------------------------------------------------------- path setup

    fn compute_path(&self, c: ConnId) -> Option<(Vec<NodeId>, Vec<LinkId>)> {
        let conn = &self.conns[c.index()];
        let excluded: BTreeSet<NodeId> = self.down_nodes.union(&self.reputation.isolated).copied().collect();
        if excluded.contains(&conn.src) || excluded.contains(&conn.dst) {
            return None;
        }
        if let Some(nodes) = &conn.pinned {
            let links: Option<Vec<LinkId>> = nodes.windows(2).map(|w| self.topo.link_between(w[0], w[1])).collect();
            let links = links?;
            let blocked =
                nodes.iter().any(|n| excluded.contains(n)) || links.iter().any(|l| self.down_links.contains(l));
            return (!blocked).then(|| (nodes.clone(), links));
        }
        let opts = RouteOptions {
            cost: self.sc.protocol.route_cost,
            excluded_nodes: excluded,
            excluded_links: self.down_links.clone(),
        };
        shortest_path(self.topo, conn.src, conn.dst, &opts).map(|p| (p.nodes, p.links))
    }

    fn begin_setup(&mut self, c: ConnId) {
        let Some((path, links)) = self.compute_path(c) else {
            self.abort(c, AbortReason::NoPath);
            return;
        };
        if path.windows(2).any(|w| !self.topo.channel(w[0], w[1]).up) {
            self.abort(c, AbortReason::ClassicalDisconnected);
            return;
        }
        let k = links.len();
        let rtt: f64 = 2.0 * path.windows(2).map(|w| self.topo.classical_latency_s(w[0], w[1])).sum::<f64>();
        let mut slots = vec![0; k + 1];
        for (i, l) in links.iter().enumerate() {
            let spec = self.topo.link(*l);
            let base = self.topo.slots_per_link(spec.a).min(self.topo.slots_per_link(spec.b));
            let sharing = 1 + self
                .conns
                .iter()
                .filter(|o| o.id != c && o.is_live() && o.links.contains(l))
                .count() as u32;
            slots[i + 1] = (base / sharing).max(1);
        }
        let factor = self.sc.protocol.setup_timeout_factor;
        let conn = &mut self.conns[c.index()];
        conn.path = path;
        conn.links = links;
        conn.timeout_s = factor * rtt.max(1e-6);
        conn.used_a = vec![0; k + 1];
        conn.used_b = vec![0; k + 1];
        conn.slots = slots;
        conn.inflight = vec![false; k + 1];
        conn.left_ready = vec![VecDeque::new(); k + 1];
        conn.right_ready = vec![VecDeque::new(); k + 1];
        conn.src_q.clear();
        conn.dst_q.clear();
        conn.pool = vec![VecDeque::new(); conn.purify_budget as usize + 1];
        let (epoch, timeout) = (conn.epoch, conn.timeout_s);
        self.schedule(self.now + timeout, Ev::SetupTimeout { conn: c, epoch });
        self.send_setup(c, 0);
    }

    fn black_hole_for(&self, dst: NodeId) -> Option<(AttackTag, NodeId)> {
        self.adv.of_kind(AttackKind::PathBlackHole).find_map(|a| match (&a.params, a.node()) {
            (Params::Addresses(set), Some(h)) if a.active(self.now) && set.contains(&dst) && h != dst => {
                Some((a.tag(), h))
            }
            _ => None,
        })
    }

    fn send_setup(&mut self, c: ConnId, hop: usize) {
        let conn = &self.conns[c.index()];
        let (from, to, dst, epoch) = (conn.path[hop], conn.path[hop + 1], conn.dst, conn.epoch);
        if let Some((tag, hole)) = self.black_hole_for(dst) {
            let e = Event::new(self.now, EventKind::AttackAction)
                .node(hole)
                .conn(c)
                .detail(format!("absorbed_setup;dst={}", self.topo.node_name(dst)));
            self.attack_event(tag, e);
            return;
        }
        if let Delivery::Arrives { at, .. } = self.send(from, to, c, "setup", false) {
            self.schedule(at, Ev::SetupArrive { conn: c, epoch, hop: hop + 1 });
        }
    }

    fn send_ack(&mut self, c: ConnId) {
        let conn = &self.conns[c.index()];
        let (from, to, epoch) = (conn.dst, conn.src, conn.epoch);
        if let Delivery::Arrives { at, .. } = self.send(from, to, c, "setup_ack", false) {
            self.schedule(at, Ev::AckArrive { conn: c, epoch });
        }
    }

    fn start_running(&mut self, c: ConnId) {
        let conn = &mut self.conns[c.index()];
        conn.state = ConnState::Running;
        conn.running_at.get_or_insert(self.now);
        let k = conn.links.len();
        for pos in 1..=k {
            self.schedule_generation(c, pos);
        }
    }

    // -------------------------------------------------------- classical plane

    /// Send one classical message, applying any active attacks on the channel.
    fn send(&mut self, from: NodeId, to: NodeId, c: ConnId, what: &str, is_frame: bool) -> Delivery {
        let ch = self.topo.channel(from, to);
        if !ch.up || self.down_nodes.contains(&from) || self.down_nodes.contains(&to) {
            return Delivery::Lost(None);
        }
        let mut at = self.now + ch.latency_s();
        let mut tampered = None;
        let mut interference = None;
        let adv = self.adv;
        for a in adv.on_channel(from, to, self.now) {
            let tag = a.tag();
            let base = Event::new(self.now, EventKind::AttackAction).node(from).conn(c);
            match a.params {
                _ if a.kind == AttackKind::EavesdropClassical => {
                    self.ledger.confidentiality.classical_messages_observed += 1;
                    self.effect(tag).messages_observed += 1;
                    self.attack_event(tag, base.detail(format!("observed;{what}")));
                }
                Params::Drop { probability } => {
                    if self.attacker_rng(a.attacker).random::<f64>() < probability {
                        self.effect(tag).messages_dropped += 1;
                        self.attack_event(tag, base.detail(format!("dropped;{what}")));
                        return Delivery::Lost(Some(tag));
                    }
                }
                Params::Delay { delay_s, suppress } => {
                    if suppress > 0.0 && self.attacker_rng(a.attacker).random::<f64>() < suppress {
                        self.effect(tag).messages_dropped += 1;
                        self.attack_event(tag, base.detail(format!("suppressed;{what}")));
                        return Delivery::Lost(Some(tag));
                    }
                    at += delay_s;
                    interference = Some(tag);
                    self.effect(tag).messages_delayed += 1;
                    self.attack_event(tag, base.detail(format!("delayed;{what}")));
                }
                Params::Modify { probability } if is_frame => {
                    if self.attacker_rng(a.attacker).random::<f64>() < probability {
                        if ch.authenticated && !self.holds_keys(a.attacker) {
                            self.ledger.integrity.tamper_detected += 1;
                            self.attack_event(tag, base.detail(format!("rejected;{what}")));
                            return Delivery::Lost(Some(tag));
                        }
                        tampered = Some(tag);
                        self.effect(tag).messages_modified += 1;
                        self.attack_event(tag, base.detail(format!("modified;{what}")));
                    }
                }
                _ => {}
            }
        }
        self.emit(
            Event::new(self.now, EventKind::ClassicalMessage)
                .node(from)
                .conn(c)
                .detail(format!("{what};to={}", self.topo.node_name(to))),
        );
        Delivery::Arrives { at, tampered, interference }
    }

    // ------------------------------------------------------ link generation

    fn schedule_generation(&mut self, c: ConnId, pos: usize) {
        let conn = &self.conns[c.index()];
        if conn.state != ConnState::Running || conn.inflight[pos] {
            return;
        }
        if conn.used_a[pos] >= conn.slots[pos] || conn.used_b[pos] >= conn.slots[pos] {
            return;
        }
        let link = conn.links[pos - 1];
        let (a, b) = (conn.path[pos - 1], conn.path[pos]);
        if self.down_links.contains(&link) || self.down_nodes.contains(&a) || self.down_nodes.contains(&b) {
            return;
        }
        let spec = self.topo.link(link);
        let sharing = self
            .conns
            .iter()
            .filter(|o| o.state == ConnState::Running && o.links.contains(&link))
            .count()
            .max(1);
        let rate = spec.attempt_rate_hz / sharing as f64;
        let p = success_probability(spec);
        let epoch = conn.epoch;
        let index = ((c.0 as u64) << 32) | link.0 as u64;
        let r = stream_mut(&mut self.rngs, self.seed, "link-gen", index);
        let Some(attempts) = attempts_until_success(p, r) else { return };
        self.conns[c.index()].inflight[pos] = true;
        self.schedule(self.now + attempts as f64 / rate, Ev::LinkSuccess { conn: c, epoch, pos, attempts });
    }

    fn link_success(&mut self, c: ConnId, epoch: u32, pos: usize, attempts: u64) {
        if self.conns[c.index()].epoch != epoch {
            return;
        }
        self.conns[c.index()].inflight[pos] = false;
        if self.conns[c.index()].state != ConnState::Running {
            return;
        }
        let conn = &mut self.conns[c.index()];
        conn.attempts += attempts;
        conn.used_a[pos] += 1;
        conn.used_b[pos] += 1;
        let link = conn.links[pos - 1];
        let (a, b) = (conn.path[pos - 1], conn.path[pos]);
        let spec = self.topo.link(link);
        let state = PairState::Werner(spec.base_fidelity);
        let pid = self.store.create(a, b, state, self.now, PairOrigin::LinkGeneration).expect("distinct link ends");
        self.meta.insert(
            pid,
            Meta {
                left: Loc::new(c, pos - 1),
                right: Loc::new(c, pos),
                pending_frames: 0,
                origin_s: self.now,
                deferred: Vec::new(),
                level: 0,
                frame_interference: None,
            },
        );
        let kind = match spec.architecture {
            crate::network::LinkArchitecture::MemoryToMemory => EventKind::LinkAttempt,
            _ => EventKind::BsaOutcome,
        };
        self.emit(
            Event::new(self.now, kind).node(a).conn(c).link(link).pair(pid).detail(format!("attempts={attempts}")),
        );
        self.schedule_generation(c, pos);
        if self.link_attacks(c, link, pid, a, b) {
            self.link_certify(c, link, pid);
        }
    }

    /// Apply quantum-plane attacks to a freshly heralded pair. Returns
    /// whether the pair survived.
    fn link_attacks(&mut self, c: ConnId, link: LinkId, pid: PairId, a: NodeId, b: NodeId) -> bool {
        let adv = self.adv;
        for act in adv.on_link(link, self.now) {
            let tag = act.tag();
            let base = Event::new(self.now, EventKind::AttackAction).conn(c).link(link).pair(pid);
            match act.params {
                Params::Read { fraction } => {
                    if self.attacker_rng(act.attacker).random::<f64>() < fraction {
                        self.ledger.confidentiality.quantum_reads += 1;
                        self.attack_event(tag, base.detail("read_photon"));
                        self.destroy_pair(pid, Disposition::DestroyedByAttack, Some(tag));
                        return false;
                    }
                }
                Params::Channel(channel) => {
                    let skip = adv.knowledge(act.attacker).predicts_sampling;
                    self.meta.get_mut(&pid).expect("fresh pair").deferred.push(Deferred {
                        channel,
                        tag,
                        skip_if_sampled: skip,
                    });
                    self.attack_event(tag, base.detail(act.kind.name()));
                }
                _ => {}
            }
        }
        for n in [a, b] {
            for act in adv.standoff_at(n, self.now) {
                if let Params::Noise { q } = act.params {
                    let tag = act.tag();
                    self.meta.get_mut(&pid).expect("fresh pair").deferred.push(Deferred {
                        channel: AttackChannel::Depolarize(q),
                        tag,
                        skip_if_sampled: false,
                    });
                    let e = Event::new(self.now, EventKind::AttackAction).node(n).conn(c).link(link).pair(pid);
                    self.attack_event(tag, e.detail("standoff_noise"));
                }
            }
        }
        true
    }

    fn link_certify(&mut self, c: ConnId, link: LinkId, pid: PairId) {
        if self.sc.protocol.cert_scope == CertScope::Link {
            let p = &self.sc.protocol;
            let seed = self.seed;
            let cert = self.link_cert.entry(link).or_insert_with(|| LinkCert {
                sampler: SecretSampler::new(seed, "link", link.0 as u64, p.sacrifice_fraction, p.chsh_fraction),
                acc: CertAccumulator::default(),
                verdict: Verdict::Inconclusive,
            });
            if let Some(test) = cert.sampler.decide() {
                self.resolve_effects(pid, true);
                let (ba, bb) = test.bases();
                let state = self.store.get(pid).expect("live").state.clone();
                let r = stream_mut(&mut self.rngs, self.seed, "measure-link", link.0 as u64);
                let (x, y) = measure_pair(&state, &ba, &bb, r);
                self.destroy_pair(pid, Disposition::Sacrificed, None);
                self.conns[c.index()].sacrificed += 1;
                self.ledger.availability.sacrificed_pairs += 1;
                let cert = self.link_cert.get_mut(&link).expect("inserted above");
                cert.acc.record(test, x, y);
                let report = cert.acc.report(self.topo.link_name(link), "link", &self.th);
                let changed = report.verdict != cert.verdict;
                cert.verdict = report.verdict;
                self.reputation.record_link_verdict(link, report.verdict);
                let mut e = Event::new(self.now, EventKind::CertSample).conn(c).link(link).pair(pid);
                if changed {
                    e = e.verdict(report.verdict);
                }
                self.emit(e);
                return;
            }
        }
        self.place(pid);
    }

    // ------------------------------------------------------------ memory

    fn free_half(&mut self, loc: Loc, side: Side) {
        if loc.buffered {
            return;
        }
        let conn = &mut self.conns[loc.conn.index()];
        if conn.path.is_empty() {
            return;
        }
        let pos = match side {
            Side::Left => {
                let p = loc.pos + 1;
                conn.used_a[p] = conn.used_a[p].saturating_sub(1);
                p
            }
            Side::Right => {
                conn.used_b[loc.pos] = conn.used_b[loc.pos].saturating_sub(1);
                loc.pos
            }
        };
        self.schedule_generation(loc.conn, pos);
    }

    fn destroy_pair(&mut self, pid: PairId, disposition: Disposition, tag: Option<AttackTag>) {
        if let Some(m) = self.meta.remove(&pid) {
            self.free_half(m.left, Side::Left);
            self.free_half(m.right, Side::Right);
        }
        self.store.take(pid, disposition).expect("destroying a live pair");
        if let Some(t) = tag {
            if disposition == Disposition::DestroyedByAttack {
                self.effect(t).destroyed_pairs += 1;
            }
        }
    }

    fn touch(&mut self, pid: PairId) {
        let Some(tau) = self.sc.protocol.decoherence_time_s else { return };
        let now = self.now;
        let rec = self.store.get_mut(pid).expect("live pair");
        rec.state.decay(now - rec.updated_at, tau);
        rec.updated_at = now;
    }

    /// Apply the deferred attack channels carried by `pid`.
    fn resolve_effects(&mut self, pid: PairId, sampled: bool) {
        let Some(m) = self.meta.get_mut(&pid) else { return };
        let deferred = std::mem::take(&mut m.deferred);
        if deferred.is_empty() {
            return;
        }
        let rec = self.store.get_mut(pid).expect("live pair");
        for d in deferred {
            if sampled && d.skip_if_sampled {
                continue;
            }
            rec.state = apply_channel(&rec.state, d.channel);
            if d.channel.leaks() {
                rec.leak_tag.get_or_insert(d.tag);
            } else {
                rec.tamper_tag.get_or_insert(d.tag);
            }
        }
    }

    // ------------------------------------------------------------ swapping

    fn place(&mut self, pid: PairId) {
        let mut touched = Vec::new();
        for side in [Side::Left, Side::Right] {
            let mut loc = self.meta[&pid].loc(side);
            if self.is_terminal(loc) {
                continue;
            }
            let node = self.node_at(loc);
            if let Some(act) = self.adv.hijack(node, AttackKind::MitmBbm92, self.now) {
                let tag = act.tag();
                loc.held = Some(tag);
                let m = self.meta.get_mut(&pid).expect("live pair");
                match side {
                    Side::Left => m.left = loc,
                    Side::Right => m.right = loc,
                }
                let e = Event::new(self.now, EventKind::AttackAction).node(node).conn(loc.conn).pair(pid);
                self.attack_event(tag, e.detail("withheld_half"));
                continue;
            }
            let conn = &mut self.conns[loc.conn.index()];
            match side {
                Side::Left => conn.right_ready[loc.pos].push_back(pid),
                Side::Right => conn.left_ready[loc.pos].push_back(pid),
            }
            touched.push((loc.conn, loc.pos));
        }
        for (c, pos) in touched {
            self.try_swaps(c, pos);
        }
        if self.store.is_live(pid) {
            self.check_deliverable(pid);
        }
    }

    /// Left/right queue pairings to swap at the node at `(c, pos)`.
    fn swap_plan(&self, c: ConnId, pos: usize) -> Vec<((ConnId, usize), (ConnId, usize))> {
        let node = self.conns[c.index()].path[pos];
        if self.adv.hijack(node, AttackKind::SwitchDisrupt, self.now).is_some() {
            let peers: Vec<(ConnId, usize)> = self
                .conns
                .iter()
                .filter(|o| o.state == ConnState::Running)
                .filter_map(|o| {
                    let p = o.path.iter().position(|n| *n == node)?;
                    (p > 0 && p < o.last()).then_some((o.id, p))
                })
                .collect();
            // With no second connection to cross with, the switch sits on
            // its halves rather than splice them honestly.
            if peers.len() < 2 {
                return Vec::new();
            }
            let m = peers.len();
            return (0..m).map(|i| (peers[i], peers[(i + 1) % m])).collect();
        }
        vec![((c, pos), (c, pos))]
    }

    fn pop_live(&mut self, c: ConnId, pos: usize, left: bool) -> Option<PairId> {
        loop {
            let conn = &mut self.conns[c.index()];
            let q = if left { &mut conn.left_ready[pos] } else { &mut conn.right_ready[pos] };
            let front = *q.front()?;
            if self.store.is_live(front) {
                return Some(front);
            }
            q.pop_front();
        }
    }

    fn try_swaps(&mut self, c: ConnId, pos: usize) {
        for ((lc, lp), (rc, rp)) in self.swap_plan(c, pos) {
            loop {
                if self.conns[lc.index()].state != ConnState::Running || self.conns[rc.index()].state != ConnState::Running
                {
                    break;
                }
                let (Some(l), Some(r)) = (self.pop_live(lc, lp, true), self.pop_live(rc, rp, false)) else {
                    break;
                };
                if l == r {
                    break;
                }
                self.conns[lc.index()].left_ready[lp].pop_front();
                self.conns[rc.index()].right_ready[rp].pop_front();
                self.swap(lc, lp, l, r);
            }
        }
    }

    fn swap(&mut self, c: ConnId, pos: usize, lp: PairId, rp: PairId) {
        let node = self.conns[c.index()].path[pos];
        self.touch(lp);
        self.touch(rp);
        let lm = self.meta.remove(&lp).expect("live pair");
        let rm = self.meta.remove(&rp).expect("live pair");
        self.free_half(lm.right, Side::Right);
        self.free_half(rm.left, Side::Left);
        let (a, b) = (self.node_at(lm.left), self.node_at(rm.right));
        if a == b {
            // Only a disrupted switch can join two halves at the same node.
            let tag = self.adv.hijack(node, AttackKind::SwitchDisrupt, self.now).map(|x| x.tag());
            self.store.take(lp, Disposition::DestroyedByAttack).expect("live");
            self.store.take(rp, Disposition::DestroyedByAttack).expect("live");
            self.free_half(lm.left, Side::Left);
            self.free_half(rm.right, Side::Right);
            if let Some(t) = tag {
                self.effect(t).destroyed_pairs += 2;
            }
            return;
        }
        let l = self.store.take(lp, Disposition::ConsumedBySwap).expect("live");
        let r = self.store.take(rp, Disposition::ConsumedBySwap).expect("live");
        let rng = stream_mut(&mut self.rngs, self.seed, "swap", node.0 as u64);
        let (mut state, outcome) = match (&l.state, &r.state) {
            (PairState::Werner(f1), PairState::Werner(f2)) => {
                let k = BellIndex::ALL[rng.random_range(0..4)];
                (PairState::Werner(swap_werner(*f1, *f2).expect("valid fidelities")), k)
            }
            _ => {
                let (s1, s2) = (l.state.to_exact(), r.state.to_exact());
                let branches: Vec<_> = BellIndex::ALL.iter().map(|k| (*k, oracle_swap(&s1, &s2, *k).ok())).collect();
                let total: f64 = branches.iter().filter_map(|(_, b)| b.as_ref().map(|x| x.1)).sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = None;
                for (k, b) in branches {
                    if let Some((s, p)) = b {
                        pick = Some((PairState::Exact(s), k));
                        if u < p {
                            break;
                        }
                        u -= p;
                    }
                }
                pick.expect("some Bell outcome has positive probability")
            }
        };
        let mut tamper = l.tamper_tag.or(r.tamper_tag);
        if let Some(act) = self.adv.hijack(node, AttackKind::LinkBadFaith, self.now) {
            if let Params::Noise { q } = act.params {
                state = apply_channel(&state, AttackChannel::Depolarize(q));
                tamper.get_or_insert(act.tag());
                let e = Event::new(self.now, EventKind::AttackAction).node(node).conn(c);
                self.attack_event(act.tag(), e.detail("bad_faith_swap"));
            }
        }
        let pid = self.store.create(a, b, state, self.now, PairOrigin::Swap).expect("distinct ends");
        {
            let rec = self.store.get_mut(pid).expect("just created");
            rec.leak_tag = l.leak_tag.or(r.leak_tag);
            rec.tamper_tag = tamper;
        }
        let mut deferred = lm.deferred;
        deferred.extend(rm.deferred);
        self.meta.insert(
            pid,
            Meta {
                left: lm.left,
                right: rm.right,
                pending_frames: lm.pending_frames + rm.pending_frames + 1,
                origin_s: lm.origin_s.min(rm.origin_s),
                deferred,
                level: 0,
                frame_interference: lm.frame_interference.or(rm.frame_interference),
            },
        );
        self.successor.insert(lp, pid);
        self.successor.insert(rp, pid);
        self.emit(
            Event::new(self.now, EventKind::SwapDecision)
                .node(node)
                .conn(c)
                .pair(pid)
                .detail(format!("left={lp};right={rp};outcome={outcome:?}")),
        );
        let holder = self.node_at(rm.right);
        let frame_conn = rm.right.conn;
        match self.send(node, holder, frame_conn, "frame", true) {
            Delivery::Arrives { at, tampered, interference } => {
                let error = tampered.map(|tag| {
                    let r = self.attacker_rng(tag.attacker);
                    ([Pauli::X, Pauli::Y, Pauli::Z][r.random_range(0..3)], tag)
                });
                self.schedule(at, Ev::FrameArrive { lineage: pid, node: holder, error, interference });
            }
            Delivery::Lost(tag) => {
                let m = self.meta.get_mut(&pid).expect("just inserted");
                m.frame_interference = m.frame_interference.or(tag);
            }
        }
        let timeout = self.conns[c.index()].timeout_s;
        self.schedule(self.now + timeout, Ev::FrameTimeout(pid));
        self.place(pid);
    }

    fn resolve_lineage(&self, mut p: PairId) -> Option<PairId> {
        loop {
            if self.meta.contains_key(&p) {
                return Some(p);
            }
            p = *self.successor.get(&p)?;
        }
    }

    fn frame_arrive(
        &mut self,
        lineage: PairId,
        node: NodeId,
        error: Option<(Pauli, AttackTag)>,
        interference: Option<AttackTag>,
    ) {
        let Some(pid) = self.resolve_lineage(lineage) else { return };
        let right = self.meta[&pid].right;
        let holder = self.node_at(right);
        if holder != node {
            // The half moved on through a later swap; relay the correction.
            match self.send(node, holder, right.conn, "frame_relay", true) {
                Delivery::Arrives { at, tampered, interference: i2 } => {
                    let error = error.or_else(|| {
                        tampered.map(|tag| {
                            let r = self.attacker_rng(tag.attacker);
                            ([Pauli::X, Pauli::Y, Pauli::Z][r.random_range(0..3)], tag)
                        })
                    });
                    let interference = interference.or(i2);
                    self.schedule(at, Ev::FrameArrive { lineage: pid, node: holder, error, interference });
                }
                Delivery::Lost(tag) => {
                    let m = self.meta.get_mut(&pid).expect("live");
                    m.frame_interference = m.frame_interference.or(tag).or(interference);
                }
            }
            return;
        }
        let m = self.meta.get_mut(&pid).expect("live");
        m.pending_frames = m.pending_frames.saturating_sub(1);
        m.frame_interference = m.frame_interference.or(interference);
        let pending = m.pending_frames;
        if let Some((pauli, tag)) = error {
            let rec = self.store.get_mut(pid).expect("live");
            rec.state = PairState::Exact(rec.state.to_exact().apply_pauli(Half::B, pauli));
            rec.tamper_tag.get_or_insert(tag);
            self.ledger.integrity.wrong_frames_applied += 1;
            self.effect(tag).wrong_frames += 1;
        }
        if pending == 0 {
            self.check_deliverable(pid);
        }
    }

    fn frame_timeout(&mut self, pid: PairId) {
        let Some(m) = self.meta.get(&pid) else { return };
        if m.pending_frames == 0 {
            return;
        }
        let tag = m.frame_interference;
        let conn = m.right.conn;
        self.emit(Event::new(self.now, EventKind::SwapDecision).conn(conn).pair(pid).detail("frame_timeout"));
        let d = if tag.is_some() { Disposition::DestroyedByAttack } else { Disposition::DestroyedByFailure };
        self.destroy_pair(pid, d, tag);
    }

    // ------------------------------------------------------------ delivery

    fn check_deliverable(&mut self, pid: PairId) {
        let Some(m) = self.meta.get(&pid) else { return };
        if m.pending_frames > 0 || !self.is_terminal(m.left) || !self.is_terminal(m.right) {
            return;
        }
        let (left, right, level) = (m.left, m.right, m.level);
        if left.held.is_some() && right.held.is_some() {
            let tag = left.held;
            self.destroy_pair(pid, Disposition::DestroyedByAttack, tag);
            return;
        }
        let same_conn = left.conn == right.conn && left.held.is_none() && right.held.is_none();
        if same_conn {
            let conn = &self.conns[left.conn.index()];
            if let Some(target) = conn.purify_target {
                if level < conn.purify_budget {
                    self.resolve_effects(pid, false);
                    self.touch(pid);
                    if self.store.get(pid).expect("live").state.fidelity() < target {
                        self.enter_pool(pid, left.conn, level);
                        return;
                    }
                }
            }
        }
        if left.held.is_none() {
            self.conns[left.conn.index()].src_q.push_back(pid);
        }
        if right.held.is_none() {
            self.conns[right.conn.index()].dst_q.push_back(pid);
        }
        self.try_items(left.conn);
        if right.conn != left.conn {
            self.try_items(right.conn);
        }
    }

    fn enter_pool(&mut self, pid: PairId, c: ConnId, level: u32) {
        let m = self.meta.get_mut(&pid).expect("live");
        let (left, right) = (m.left, m.right);
        m.left.buffered = true;
        m.right.buffered = true;
        self.free_half(left, Side::Left);
        self.free_half(right, Side::Right);
        let pool = &mut self.conns[c.index()].pool[level as usize];
        pool.retain(|p| self.store.is_live(*p));
        pool.push_back(pid);
        if pool.len() < 2 {
            return;
        }
        let p1 = pool.pop_front().expect("len >= 2");
        let p2 = pool.pop_front().expect("len >= 2");
        self.touch(p1);
        self.touch(p2);
        let m1 = self.meta.remove(&p1).expect("live");
        let m2 = self.meta.remove(&p2).expect("live");
        let r1 = self.store.take(p1, Disposition::ConsumedByPurify).expect("live");
        let r2 = self.store.take(p2, Disposition::ConsumedByPurify).expect("live");
        let rng = stream_mut(&mut self.rngs, self.seed, "purify", c.0 as u64);
        let (success, state) = match (&r1.state, &r2.state) {
            (PairState::Werner(f1), PairState::Werner(f2)) => {
                let o = purify(*f1, *f2, rng).expect("valid fidelities");
                (o.success, PairState::Werner(o.f_out))
            }
            _ => {
                let (p, post) = oracle_purify(&r1.state.to_exact(), &r2.state.to_exact()).expect("valid states");
                (rng.random::<f64>() < p, PairState::Exact(post))
            }
        };
        let mut e = Event::new(self.now, EventKind::PurifyRound).conn(c).node(r1.endpoint_a);
        if success {
            let f = state.fidelity();
            let np = self
                .store
                .create(r1.endpoint_a, r1.endpoint_b, state, self.now, PairOrigin::Purification)
                .expect("distinct ends");
            let rec = self.store.get_mut(np).expect("just created");
            rec.leak_tag = r1.leak_tag.or(r2.leak_tag);
            rec.tamper_tag = r1.tamper_tag.or(r2.tamper_tag);
            self.meta.insert(
                np,
                Meta {
                    left: m1.left,
                    right: m1.right,
                    pending_frames: 0,
                    origin_s: m1.origin_s.min(m2.origin_s),
                    deferred: Vec::new(),
                    level: level + 1,
                    frame_interference: None,
                },
            );
            e = e.pair(np).detail(format!("level={};success=true;fidelity={f:.6}", level + 1));
            let conn = &self.conns[c.index()];
            let latency = self.topo.classical_latency_s(conn.src, conn.dst);
            self.schedule(self.now + latency, Ev::PurifyDone(np));
        } else {
            e = e.detail(format!("level={};success=false", level + 1));
        }
        self.emit(e);
    }

    fn try_items(&mut self, c: ConnId) {
        loop {
            if self.conns[c.index()].state != ConnState::Running {
                return;
            }
            let a = self.front_half(c, Side::Left);
            let b = self.front_half(c, Side::Right);
            let (Some(a), Some(b)) = (a, b) else { return };
            let conn = &mut self.conns[c.index()];
            conn.src_q.pop_front();
            conn.dst_q.pop_front();
            self.process_item(c, a, b);
        }
    }

    fn front_half(&mut self, c: ConnId, side: Side) -> Option<PairId> {
        loop {
            let conn = &mut self.conns[c.index()];
            let q = if side == Side::Left { &mut conn.src_q } else { &mut conn.dst_q };
            let front = *q.front()?;
            if self.store.is_live(front) || self.residual.contains_key(&(front, side)) {
                return Some(front);
            }
            q.pop_front();
        }
    }

    fn half_loc(&self, pid: PairId, side: Side) -> Loc {
        match self.meta.get(&pid) {
            Some(m) => m.loc(side),
            None => self.residual[&(pid, side)].loc,
        }
    }

    /// Measure one end half. When the partner half is held by an attacker
    /// it is measured too, in a Z or X basis of the attacker's choosing.
    fn measure_end(
        &mut self,
        pid: PairId,
        side: Side,
        mb: &MeasurementBasis,
        disposition: Disposition,
    ) -> (bool, Option<(bool, BasisLabel)>) {
        if let Some(res) = self.residual.remove(&(pid, side)) {
            let r = stream_mut(&mut self.rngs, self.seed, "measure", res.loc.conn.0 as u64);
            return (measure_qubit(&res.rho, mb, r), None);
        }
        let m = self.meta.remove(&pid).expect("live pair");
        let other = m.loc(side.other());
        let rec = self.store.take(pid, disposition).expect("live pair");
        if let Some(tag) = other.held {
            let atk_basis = random_basis(self.attacker_rng(tag.attacker));
            let ab = MeasurementBasis::from_label(atk_basis);
            let r = stream_mut(&mut self.rngs, self.seed, "measure", other.conn.0 as u64);
            let (ours, theirs) = match side {
                Side::Left => measure_pair(&rec.state, mb, &ab, r),
                Side::Right => {
                    let (x, y) = measure_pair(&rec.state, &ab, mb, r);
                    (y, x)
                }
            };
            self.free_half(other, side.other());
            return (ours, Some((theirs, atk_basis)));
        }
        let r = stream_mut(&mut self.rngs, self.seed, "measure", other.conn.0 as u64);
        let (bit, rho) = measure_half(&rec.state.to_exact(), side.half(), mb, r);
        self.residual.insert((pid, side.other()), Residual { rho, loc: other });
        (bit, None)
    }

    /// Hand one end half to the application without measuring it.
    fn release_end(&mut self, pid: PairId, side: Side) {
        if self.residual.remove(&(pid, side)).is_some() {
            return;
        }
        let m = self.meta.remove(&pid).expect("live pair");
        let other = m.loc(side.other());
        let rec = self.store.take(pid, Disposition::Delivered).expect("live pair");
        if other.held.is_some() {
            self.free_half(other, side.other());
        } else {
            let rho = rec.state.to_exact().reduced(side.other().half());
            self.residual.insert((pid, side.other()), Residual { rho, loc: other });
        }
    }

    fn endpoints_key(&self, pid: PairId) -> Option<String> {
        let r = self.store.get(pid).ok()?;
        Some(format!("{}|{}", self.topo.node_name(r.endpoint_a), self.topo.node_name(r.endpoint_b)))
    }

    fn pair_leak(&self, pid: PairId) -> Option<AttackTag> {
        if let Some(m) = self.meta.get(&pid) {
            let held = m.left.held.or(m.right.held);
            return self.store.get(pid).ok().and_then(|r| r.leak_tag).or(held);
        }
        None
    }

    fn pair_tamper(&self, pid: PairId) -> Option<AttackTag> {
        self.store.get(pid).ok().and_then(|r| r.tamper_tag)
    }

    /// Whether certification results of `c` can be forged by an attacker.
    fn cert_forger(&self, c: ConnId) -> Option<AttackTag> {
        let conn = &self.conns[c.index()];
        let ch = self.topo.channel(conn.src, conn.dst);
        if let Some(tag) = self.impersonator(c) {
            return Some(tag);
        }
        self.adv.on_channel(conn.src, conn.dst, self.now).find_map(|a| {
            (a.kind == AttackKind::ModifyMessages && (!ch.authenticated || self.holds_keys(a.attacker)))
                .then(|| a.tag())
        })
    }

    /// Man in the middle on `c` able to pose as each end to the other.
    fn impersonator(&self, c: ConnId) -> Option<AttackTag> {
        let conn = &self.conns[c.index()];
        if conn.path.len() < 3 {
            return None;
        }
        let ch = self.topo.channel(conn.src, conn.dst);
        conn.path[1..conn.last()].iter().find_map(|n| {
            let a = self.adv.hijack(*n, AttackKind::MitmBbm92, self.now)?;
            (!ch.authenticated || self.holds_keys(a.attacker)).then(|| a.tag())
        })
    }

    fn process_item(&mut self, c: ConnId, p: PairId, q: PairId) {
        let test = if self.sc.protocol.cert_scope == CertScope::E2e {
            self.conns[c.index()].sampler.decide()
        } else {
            None
        };
        let sampled = test.is_some();
        for id in [p, q] {
            if self.store.is_live(id) {
                self.resolve_effects(id, sampled);
                self.touch(id);
            }
        }
        let (src, dst, app) = {
            let conn = &self.conns[c.index()];
            (conn.src, conn.dst, conn.app)
        };
        let malicious = [src, dst]
            .into_iter()
            .find_map(|n| self.adv.hijack(n, AttackKind::MaliciousApplication, self.now).map(|a| a.tag()));
        let leak = self.pair_leak(p).or(self.pair_leak(q)).or(malicious);
        let tamper = self.pair_tamper(p).or(self.pair_tamper(q));
        let same = p == q;
        let fidelity = if same { self.store.get(p).expect("live").state.fidelity() } else { 0.25 };
        let origin = self.meta.get(&p).map_or(self.now, |m| m.origin_s);
        if !sampled {
            let ids = if same { vec![p] } else { vec![p, q] };
            let keys: Vec<String> = ids.into_iter().filter_map(|id| self.endpoints_key(id)).collect();
            for k in keys {
                *self.conns[c.index()].endpoints.entry(k).or_default() += 1;
            }
        }
        let loc_a = self.half_loc(p, Side::Left);
        let loc_b = self.half_loc(q, Side::Right);
        let disposition = if sampled { Disposition::Sacrificed } else { Disposition::Delivered };
        // Z/X labels are kept for key sifting; tests carry their own bases.
        let bases: Option<(MeasurementBasis, MeasurementBasis, Option<(BasisLabel, BasisLabel)>)> = match test {
            Some(t) => {
                let (ba, bb) = t.bases();
                Some((ba, bb, None))
            }
            None if app == Application::Bbm92 => {
                let la = random_basis(stream_mut(&mut self.rngs, self.seed, "basis-a", c.0 as u64));
                let lb = random_basis(stream_mut(&mut self.rngs, self.seed, "basis-b", c.0 as u64));
                Some((MeasurementBasis::from_label(la), MeasurementBasis::from_label(lb), Some((la, lb))))
            }
            None => None,
        };
        let mut outcome = None;
        if let Some((ba, bb, _)) = &bases {
            if same {
                self.meta.remove(&p);
                let rec = self.store.take(p, disposition).expect("live");
                let r = stream_mut(&mut self.rngs, self.seed, "measure", c.0 as u64);
                let (x, y) = measure_pair(&rec.state, ba, bb, r);
                outcome = Some((x, y, None, None));
            } else {
                let (x, atk_a) = self.measure_end(p, Side::Left, ba, disposition);
                let (y, atk_b) = self.measure_end(q, Side::Right, bb, disposition);
                outcome = Some((x, y, atk_a, atk_b));
            }
        } else if same {
            self.meta.remove(&p);
            self.store.take(p, disposition).expect("live");
        } else {
            self.release_end(p, Side::Left);
            self.release_end(q, Side::Right);
        }
        self.free_half(loc_a, Side::Left);
        self.free_half(loc_b, Side::Right);

        if let (Some(t), Some((x, y, _, _))) = (test, outcome) {
            self.record_cert(c, t, x, y, p);
            return;
        }

        // Delivered item.
        let flagged = self.conns[c.index()].verdict == Verdict::AttackSuspected;
        {
            let conn = &mut self.conns[c.index()];
            conn.delivered += 1;
            conn.fidelity_sum += fidelity;
            conn.latency_sum += self.now - origin;
        }
        self.ledger.availability.delivered_pairs += 1;
        if let Some(tag) = leak {
            self.ledger.confidentiality.leaked_pairs += 1;
            self.effect(tag).leaked_pairs += 1;
        } else if fidelity < self.th.fidelity_floor && !flagged {
            self.ledger.integrity.bad_delivered += 1;
            if let Some(tag) = tamper {
                self.effect(tag).bad_delivered += 1;
            }
        }
        self.emit(
            Event::new(self.now, EventKind::AppMeasure)
                .node(dst)
                .conn(c)
                .pair(p)
                .detail(format!("fidelity={fidelity:.6};leaked={}", leak.is_some())),
        );
        if let (Some((_, _, Some((la, lb)))), Some((x, y, atk_a, atk_b))) = (bases, outcome) {
            let keys = &mut self.conns[c.index()].keys;
            keys.record(x, y, la, lb, leak);
            if let Some((ax, al)) = atk_a {
                if al == la {
                    keys.a_side.push(Sifted { a: x, b: ax, basis: la, leak: None });
                }
            }
            if let Some((bx, bl)) = atk_b {
                if bl == lb {
                    keys.b_side.push(Sifted { a: bx, b: y, basis: lb, leak: None });
                }
            }
        }
        self.check_completion(c);
    }

    fn record_cert(&mut self, c: ConnId, test: TestChoice, x: bool, y: bool, pid: PairId) {
        let (x, y) = match self.cert_forger(c) {
            Some(tag) => {
                let (ba, bb) = test.bases();
                let r = self.attacker_rng(tag.attacker);
                measure_pair(&PairState::Werner(1.0), &ba, &bb, r)
            }
            None => (x, y),
        };
        self.ledger.availability.sacrificed_pairs += 1;
        let conn = &mut self.conns[c.index()];
        conn.sacrificed += 1;
        conn.cert.record(test, x, y);
        let report = conn.cert.report(conn.id.to_string(), "e2e", &self.th);
        let changed = report.verdict != conn.verdict;
        conn.verdict = report.verdict;
        let interior: Vec<NodeId> =
            if conn.path.len() > 2 { conn.path[1..conn.last()].to_vec() } else { Vec::new() };
        let mut e = Event::new(self.now, EventKind::CertSample).conn(c).pair(pid);
        if changed {
            e = e.verdict(report.verdict);
        }
        self.emit(e);
        if changed && matches!(report.verdict, Verdict::Degraded | Verdict::AttackSuspected) {
            for n in self.reputation.corroborate(&interior, self.now) {
                self.isolate(n);
            }
        }
        self.check_completion(c);
    }

    fn check_completion(&mut self, c: ConnId) {
        let conn = &self.conns[c.index()];
        if conn.state != ConnState::Running {
            return;
        }
        match conn.app {
            Application::Pairs => {
                if conn.delivered >= conn.target_pairs {
                    self.complete(c);
                }
            }
            Application::Bbm92 => {
                let imp = self.impersonator(c).is_some();
                if conn.keys.is_complete(imp, conn.sifted_target) {
                    let s = self.close_session(c, true);
                    if s.status == SessionStatus::Aborted {
                        self.abort(c, AbortReason::QberAbort);
                    } else {
                        self.complete(c);
                    }
                }
            }
        }
    }

    fn close_session(&mut self, c: ConnId, complete: bool) -> KeySession {
        let imp = self.impersonator(c);
        let conn = &self.conns[c.index()];
        let params = SessionParams {
            connection: c,
            demand: conn.demand.clone().unwrap_or_default(),
            key_length: conn.key_length,
            sifted_target: conn.sifted_target,
            check_fraction: conn.check_fraction,
            abort_threshold: self.sc.protocol.qber_abort_threshold,
        };
        let r = stream_mut(&mut self.rngs, self.seed, "bbm92-check", c.0 as u64);
        let s = conn.keys.finalize(&params, imp.is_some(), complete, r);
        let joint_empty = conn.keys.joint.is_empty();
        self.ledger.confidentiality.leaked_key_bits += s.leaked_key_bits;
        self.ledger.integrity.corrupted_key_bits += s.corrupted_key_bits;
        if let Some(tag) = imp {
            let e = self.effect(tag);
            e.leaked_key_bits += s.leaked_key_bits;
            e.corrupted_key_bits += s.corrupted_key_bits;
        } else {
            for (a, n) in &s.leaks_by_action {
                self.effects.get_mut(a).expect("known action").leaked_key_bits += n;
            }
        }
        if complete {
            // The check bits double as a certification sample set.
            let mut acc = CertAccumulator {
                z_n: s.check_z.0,
                z_err: s.check_z.1,
                x_n: s.check_x.0,
                x_err: s.check_x.1,
                ..Default::default()
            };
            if imp.is_none() && joint_empty {
                acc = CertAccumulator::default();
            }
            let report = acc.report(format!("{c}/session"), "session", &self.th);
            let mut e = Event::new(self.now, EventKind::CertSample).conn(c).detail("key_session");
            if report.n_qber > 0 {
                e = e.verdict(report.verdict);
            }
            self.emit(e);
        }
        self.conns[c.index()].session = Some(s.clone());
        s
    }

    fn complete(&mut self, c: ConnId) {
        self.teardown(c, Disposition::Discarded, None);
        let conn = &mut self.conns[c.index()];
        conn.state = ConnState::Done;
        conn.finished_at = Some(self.now);
    }

    fn abort(&mut self, c: ConnId, reason: AbortReason) {
        self.teardown(c, Disposition::DestroyedByFailure, None);
        let conn = &mut self.conns[c.index()];
        conn.state = ConnState::Aborted;
        conn.abort = Some(reason);
        conn.finished_at = Some(self.now);
        self.emit(Event::new(self.now, EventKind::NodeFailure).conn(c).detail(format!("aborted;{reason:?}")));
    }

    /// Destroy every pair with a half on `c` and reset its queues.
    fn teardown(&mut self, c: ConnId, disposition: Disposition, tag: Option<AttackTag>) {
        let doomed: Vec<PairId> = self
            .meta
            .iter()
            .filter(|(_, m)| m.left.conn == c || m.right.conn == c)
            .map(|(p, _)| *p)
            .collect();
        for p in doomed {
            self.destroy_pair(p, disposition, tag);
        }
        self.residual.retain(|_, r| r.loc.conn != c);
        let conn = &mut self.conns[c.index()];
        conn.epoch += 1;
        for q in conn.left_ready.iter_mut().chain(conn.right_ready.iter_mut()).chain(conn.pool.iter_mut()) {
            q.clear();
        }
        conn.src_q.clear();
        conn.dst_q.clear();
        conn.used_a.iter_mut().for_each(|x| *x = 0);
        conn.used_b.iter_mut().for_each(|x| *x = 0);
        conn.inflight.iter_mut().for_each(|x| *x = false);
    }

    fn reroute_through(&mut self, node: Option<NodeId>, link: Option<LinkId>, tag: Option<AttackTag>) {
        let affected: Vec<ConnId> = self
            .conns
            .iter()
            .filter(|c| c.is_live())
            .filter(|c| node.is_some_and(|n| c.path.contains(&n)) || link.is_some_and(|l| c.links.contains(&l)))
            .map(|c| c.id)
            .collect();
        for c in affected {
            let d = if tag.is_some() { Disposition::DestroyedByAttack } else { Disposition::DestroyedByFailure };
            self.teardown(c, d, tag);
            let conn = &mut self.conns[c.index()];
            conn.reroutes += 1;
            conn.state = ConnState::SettingUp;
            self.begin_setup(c);
        }
    }

    fn isolate(&mut self, n: NodeId) {
        self.ledger.availability.isolated_nodes.push(self.topo.node_name(n).to_string());
        self.emit(Event::new(self.now, EventKind::NodeFailure).node(n).detail("isolated_by_monitor"));
        self.reroute_through(Some(n), None, None);
    }

    // ------------------------------------------------------------- attacks

    fn attack_start(&mut self, id: ActionId) {
        let adv = self.adv;
        let act = adv.action(id);
        let tag = act.tag();
        let base = Event::new(self.now, EventKind::AttackAction);
        match (act.kind, &act.target, &act.params) {
            (AttackKind::DestroyAsset | AttackKind::StealAsset, target, params) => {
                if let Params::Steal { classical: true } = params {
                    self.keys_stolen_at.entry(act.attacker).or_insert(self.now);
                }
                match target {
                    Target::Node(n) => {
                        self.down_nodes.insert(*n);
                        self.attack_event(tag, base.node(*n).detail(act.kind.name()));
                        self.emit(Event::new(self.now, EventKind::NodeFailure).node(*n).action(id).detail("node_lost"));
                        self.reroute_through(Some(*n), None, Some(tag));
                    }
                    Target::Link(l) => {
                        self.down_links.insert(*l);
                        self.attack_event(tag, base.link(*l).detail(act.kind.name()));
                        self.emit(Event::new(self.now, EventKind::NodeFailure).link(*l).action(id).detail("link_lost"));
                        self.reroute_through(None, Some(*l), Some(tag));
                    }
                    _ => {}
                }
            }
            (AttackKind::FalseFailureReport, Target::Node(h), Params::Victim(v)) => {
                self.down_nodes.insert(*v);
                let e = base.node(*h).detail(format!("reported_failed={}", self.topo.node_name(*v)));
                self.attack_event(tag, e);
                self.reroute_through(Some(*v), None, Some(tag));
            }
            (AttackKind::LinkDown, Target::Node(h), Params::Link(l)) => {
                self.down_links.insert(*l);
                self.attack_event(tag, base.node(*h).link(*l).detail("reported_link_down"));
                self.reroute_through(None, Some(*l), Some(tag));
            }
            (AttackKind::QdosOversizedRequest | AttackKind::Qddos, target, Params::Request { dst, target_pairs }) => {
                let sources = match target {
                    Target::Node(n) => vec![*n],
                    Target::Nodes(ns) => ns.clone(),
                    _ => Vec::new(),
                };
                for s in sources {
                    let cid = ConnId(self.conns.len() as u32);
                    let mut conn = self.new_conn(cid, s, *dst, Application::Pairs, *target_pairs, 0.0, self.now);
                    conn.injected_by = Some(id);
                    self.conns.push(conn);
                    self.attack_event(tag, base.clone().node(s).conn(cid).detail("oversized_request"));
                    self.schedule(self.now, Ev::ConnStart(cid));
                }
            }
            (AttackKind::FrameNodes, Target::Node(h), Params::Victims(victims)) => {
                let plane_auth = self.topo.classical_authenticated();
                let keys = self.holds_keys(act.attacker);
                for v in victims {
                    let mut sources: BTreeSet<NodeId> = self.topo.neighbors(*h).iter().map(|(n, _)| *n).collect();
                    sources.insert(*h);
                    sources.remove(v);
                    for s in sources {
                        let authenticated = plane_auth && (s == *h || keys);
                        let e = base.clone().node(*h).detail(format!(
                            "accuse={};as={}",
                            self.topo.node_name(*v),
                            self.topo.node_name(s)
                        ));
                        self.attack_event(tag, e);
                        let acc = Accusation { source: s, accused: *v, authenticated, time_s: self.now };
                        if let Some(n) = self.reputation.update_reputation(acc) {
                            self.isolate(n);
                        }
                    }
                }
            }
            _ => {}
        }
    }

    fn verify_round(&mut self, n: NodeId) {
        let Some(mean) = self.sc.protocol.verify_interval_mean_s else { return };
        let next = self.now + self.exp_delay("verify-timer", n.0 as u64, mean);
        self.schedule(next, Ev::VerifyRound(n));
        if self.down_nodes.contains(&n) || self.reputation.isolated.contains(&n) {
            return;
        }
        let samples = self.sc.protocol.verify_samples;
        let adv = self.adv;
        for (other, link) in self.topo.neighbors(n).to_vec() {
            if self.down_links.contains(&link) || self.down_nodes.contains(&other) {
                continue;
            }
            let spec = self.topo.link(link);
            let mut acc = CertAccumulator::default();
            for i in 0..samples {
                let (a, b) = (spec.a, spec.b);
                let pid = self
                    .store
                    .create(a, b, PairState::Werner(spec.base_fidelity), self.now, PairOrigin::LinkGeneration)
                    .expect("distinct ends");
                self.verification_probes += 1;
                let mut state = PairState::Werner(spec.base_fidelity);
                let mut read = false;
                for act in adv.on_link(link, self.now) {
                    match act.params {
                        Params::Channel(ch) if !adv.knowledge(act.attacker).predicts_sampling => {
                            state = apply_channel(&state, ch);
                        }
                        Params::Read { fraction } => {
                            read |= self.attacker_rng(act.attacker).random::<f64>() < fraction;
                        }
                        _ => {}
                    }
                }
                if read {
                    self.store.take(pid, Disposition::DestroyedByAttack).expect("live");
                    continue;
                }
                let test = TestChoice::Qber(if i % 2 == 0 { BasisLabel::Z } else { BasisLabel::X });
                let (ba, bb) = test.bases();
                let r = stream_mut(&mut self.rngs, self.seed, "verify", n.0 as u64);
                let (x, y) = measure_pair(&state, &ba, &bb, r);
                acc.record(test, x, y);
                self.store.take(pid, Disposition::Sacrificed).expect("live");
            }
            let subject = format!("{}@{}", self.topo.link_name(link), self.topo.node_name(n));
            let report = acc.report(subject, "verification", &self.th);
            let verdict = report.verdict;
            self.emit(Event::new(self.now, EventKind::CertSample).node(n).link(link).verdict(verdict).detail("verification"));
            self.verify_reports.insert((n, link), report);
            if verdict == Verdict::AttackSuspected {
                let acc = Accusation {
                    source: n,
                    accused: other,
                    authenticated: self.topo.classical_authenticated(),
                    time_s: self.now,
                };
                if let Some(x) = self.reputation.update_reputation(acc) {
                    self.isolate(x);
                }
            }
        }
    }

    // -------------------------------------------------------------- output

    fn finish(mut self, end: f64) -> RunOutput {
        for i in 0..self.conns.len() {
            let c = ConnId(i as u32);
            if self.conns[i].app == Application::Bbm92 && self.conns[i].session.is_none() {
                self.close_session(c, false);
            }
        }
        let removed: BTreeSet<NodeId> = self.down_nodes.union(&self.reputation.isolated).copied().collect();
        let part = partition_report(self.topo, &removed);
        let counters = self.store.counters().clone();
        let a = &mut self.ledger.availability;
        a.disconnected_pairs_fraction = part.disconnected_pairs_fraction;
        a.destroyed_by_attack = counters.retired(Disposition::DestroyedByAttack);
        a.destroyed_by_failure = counters.retired(Disposition::DestroyedByFailure);
        a.aborted_connections = self.conns.iter().filter(|c| c.state == ConnState::Aborted).count() as u64;
        a.link_attempts = self.conns.iter().map(|c| c.attempts).sum();
        a.delivered_rate_hz = if end > 0.0 { a.delivered_pairs as f64 / end } else { 0.0 };
        a.isolated_nodes.sort();
        a.isolated_nodes.dedup();

        let events = self.log.events();
        let mut detection = Vec::new();
        for act in &self.adv.actions {
            let t = detection_latency(events, act.id);
            let e = self.effects.get_mut(&act.id).expect("row");
            e.first_effect_s = t.first_effect_s;
            e.detected_at_s = t.detected_at_s;
            e.detection_latency_s = t.latency_s;
            detection.push(DetectionRecord {
                action: act.id,
                attacker: e.attacker.clone(),
                kind: e.kind.clone(),
                represents: e.represents.clone(),
                first_effect_s: t.first_effect_s,
                detected_at_s: t.detected_at_s,
                detection_latency_s: t.latency_s,
            });
        }
        self.ledger.detection = detection;

        let mut certification = Vec::new();
        for (link, cert) in &self.link_cert {
            certification.push(cert.acc.report(self.topo.link_name(*link), "link", &self.th));
        }
        for c in &self.conns {
            if c.cert.samples() > 0 || self.sc.protocol.cert_scope == CertScope::E2e {
                certification.push(c.cert.report(c.id.to_string(), "e2e", &self.th));
            }
            if let Some(s) = &c.session {
                if s.check_bits > 0 {
                    let acc = CertAccumulator {
                        z_n: s.check_z.0,
                        z_err: s.check_z.1,
                        x_n: s.check_x.0,
                        x_err: s.check_x.1,
                        ..Default::default()
                    };
                    certification.push(acc.report(format!("{}/session", c.id), "session", &self.th));
                }
            }
        }
        certification.extend(self.verify_reports.values().cloned());

        let topo = self.topo;
        let connections = self
            .conns
            .iter()
            .map(|c| {
                let stop = c.finished_at.unwrap_or(end);
                let active = c.running_at.map(|r| stop - r).unwrap_or(0.0);
                ConnectionReport {
                    id: c.id,
                    demand: c.demand.clone(),
                    injected_by: c.injected_by,
                    src: topo.node_name(c.src).to_string(),
                    dst: topo.node_name(c.dst).to_string(),
                    application: c.app,
                    state: c.state,
                    abort_reason: c.abort,
                    path: c.path.iter().map(|n| topo.node_name(*n).to_string()).collect(),
                    reroutes: c.reroutes,
                    start_s: c.start_s,
                    running_at_s: c.running_at,
                    finished_at_s: c.finished_at,
                    target_pairs: c.target_pairs,
                    delivered: c.delivered,
                    sacrificed: c.sacrificed,
                    link_attempts: c.attempts,
                    throughput_hz: if active > 0.0 { c.delivered as f64 / active } else { 0.0 },
                    mean_fidelity: (c.delivered > 0).then(|| c.fidelity_sum / c.delivered as f64),
                    mean_latency_s: (c.delivered > 0).then(|| c.latency_sum / c.delivered as f64),
                    delivered_endpoints: c.endpoints.clone(),
                    verdict: c.verdict,
                }
            })
            .collect();
        let key_sessions = self.conns.iter().filter_map(|c| c.session.clone()).collect();
        let accounting = Accounting {
            created_total: counters.created_total(),
            retired_total: counters.retired_total(),
            live_at_end: self.store.live_count() as u64,
            identity_holds: self.store.is_conserved(),
            verification_probes: self.verification_probes,
            counters,
        };
        RunOutput {
            seed: self.seed,
            end_time_s: end,
            log: self.log,
            ledger: self.ledger,
            connections,
            certification,
            reputation: self.reputation,
            key_sessions,
            attack_effects: self.effects.into_values().collect(),
            accounting,
        }
    }
}
